"""
All of the files in the data/ directory define the records the recommenders consume, how they
are read from and written to disk, how they are split for training and evaluation, and the
synthetic generators that stand in for the proprietary auction and contract data.
"""
