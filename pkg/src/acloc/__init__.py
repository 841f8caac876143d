"""acloc: language-driven temporal localization in videos via activity
concepts and actionness scoring, built on precomputed unit-level features."""

__version__ = "0.1.0"
