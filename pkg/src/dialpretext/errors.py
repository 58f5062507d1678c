"""Exception types shared across the package.

Everything raised for bad data or bad configuration derives from
DialpretextError so callers (notably the CLI) can map the whole family
to a single "data error" exit path.
"""


class DialpretextError(Exception):
    pass


# corpus -----------------------------------------------------------------

class EmptyDialogueError(DialpretextError):
    """Raw dialogue block contained no parseable line."""


class MissingSpeakerError(DialpretextError):
    """First line of a dialogue block has no speaker prefix."""


class MalformedRecordError(DialpretextError):
    """A corpus file record could not be interpreted."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


# vocab ------------------------------------------------------------------

class VocabError(DialpretextError):
    """Vocabulary file violates the one-token-per-line contract."""


class TooManySpeakersError(DialpretextError):
    """Dialogue has more interlocutors than the person-token budget."""


# pretext ----------------------------------------------------------------

class InvalidConfigError(DialpretextError):
    pass


class SingleSpeakerError(DialpretextError):
    """Speaker swapping needs at least two interlocutors."""


class NoSummaryError(DialpretextError):
    """Name masking needs a reference summary."""


class NoDonorsError(DialpretextError):
    """Utterance insertion needs at least one other dialogue."""


class KTooLargeError(DialpretextError):
    """More insertions requested than inter-utterance gaps available."""


class SequenceEmptyError(DialpretextError):
    """First turn alone exceeds the maximum sequence length."""


# evalmetrics ------------------------------------------------------------

class EmptyPairsError(DialpretextError):
    pass


class MissingIdError(DialpretextError):
    pass


class DimensionMismatchError(DialpretextError):
    pass


# tinymodel --------------------------------------------------------------

class SequenceTooLongError(DialpretextError):
    pass


class PositionOutOfRangeError(DialpretextError):
    pass


class NoLabelsError(DialpretextError):
    pass


class ShapeMismatchError(DialpretextError):
    pass
