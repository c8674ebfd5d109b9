"""Self-hostable autograding service for notebook-based STEM assignments:
administrator-defined tests plus a multi-stage LLM grading conversation,
immediate per-attempt feedback over WebSockets, and a tutor review console.
"""

__version__ = "0.1.0"
