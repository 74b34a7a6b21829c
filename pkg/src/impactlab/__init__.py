"""Market-impact laboratory."""
