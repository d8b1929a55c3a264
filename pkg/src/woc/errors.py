"""Exception types shared across the package."""


class WocError(Exception):
    """Base class for all errors raised by this package."""


class MalformedObject(WocError):
    """A git object payload does not follow the grammar of its kind."""


class StoreCorrupt(WocError):
    """Store files and manifest disagree in a way that cannot be reconciled."""


class PreconditionFailed(WocError):
    """An operation was invoked without its declared precondition holding."""


class NotFound(WocError):
    """Requested object is not present in the store."""


class DecompressFailed(WocError):
    """A content-log span could not be decompressed; signals log corruption."""


class RepoUnreachable(WocError):
    """A repository source could not be read or contacted."""


class UnreadableList(WocError):
    """The corpus list file could not be read."""


class DuplicateName(WocError):
    """Two corpus entries resolved to the same project name."""


class MissingObject(WocError):
    """A tree or blob referenced by another object is absent from the store."""

    def __init__(self, msg, referencing_id=None):
        super().__init__(msg)
        self.referencing_id = referencing_id


class StaleJournal(WocError):
    """The membership journal references a commit absent from the store."""


class MapUnavailable(WocError):
    """A requested map has not been built or cannot be opened."""


class SchemaMismatch(WocError):
    """Composed maps do not share a common middle entity."""


class VersionMismatch(WocError):
    """Maps or stores built from different store versions were mixed."""


class UnknownProject(WocError):
    """Project is not part of the partition universe."""


class UnknownAuthor(WocError):
    """Author id is absent from the author-to-commit map."""


class IoFailure(WocError):
    """An export or sort stream failed at the I/O level."""
