"""Feedback rendering: rich in a notebook, plain prints elsewhere.

Each hand-in creates a display slot right under the calling cell; the
asynchronous feedback later updates that same slot, so results appear where
the student handed in even if they moved on.
"""

from __future__ import annotations


def _ipython_display():
    try:
        from IPython import get_ipython

        if get_ipython() is None:
            return None, None  # importable but no live shell: plain prints
        from IPython.display import Markdown, display

        return display, Markdown
    except ImportError:
        return None, None


class FeedbackSlot:
    def __init__(self, exercise: str):
        self.exercise = exercise
        display, markdown = _ipython_display()
        self._markdown = markdown
        self._handle = None
        if display is not None:
            self._handle = display(
                markdown(f"*{exercise}: handed in, waiting for feedback...*"),
                display_id=True,
            )
        else:
            print(f"[{exercise}] handed in, waiting for feedback...")

    def update(self, text: str) -> None:
        if self._handle is not None:
            self._handle.update(self._markdown(text))
        else:
            print(text)


def notice(text: str) -> None:
    display, markdown = _ipython_display()
    if display is not None:
        display(markdown(text))
    else:
        print(text)


def feedback_text(exercise: str, payload: dict) -> str:
    score = payload.get("score")
    max_points = payload.get("max_points")
    remaining = payload.get("remaining_attempts")
    lines = [f"**{exercise}: {score} / {max_points} points**"]
    if payload.get("needs_review"):
        lines.append("_(a tutor will double-check this grade)_")
    body = (payload.get("feedback") or "").strip()
    if body:
        lines.append("")
        lines.append(body)
    if remaining is not None:
        lines.append("")
        lines.append(f"_Remaining attempts: {remaining}_")
    return "\n".join(lines)
