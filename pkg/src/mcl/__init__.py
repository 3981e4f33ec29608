"""Learning multi-class classifiers from multiple complementary labels."""

__version__ = "0.1.0"
