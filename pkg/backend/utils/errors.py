"""
Exception hierarchy shared by the pipeline services.

Everything raised on purpose derives from PipelineError so the CLI can map
failures onto exit codes without catching unrelated bugs.
"""

from typing import List, Optional


class PipelineError(Exception):
    """Base class for all expected pipeline failures"""


class ContractError(PipelineError, ValueError):
    """A caller broke an operation's precondition"""


class InvalidInputError(ContractError):
    """Input value is unusable (e.g. empty text for embedding)"""


class DataValidationError(PipelineError, ValueError):
    """Input data failed validation"""


class ChartStructureError(DataValidationError):
    """Chart of accounts is structurally broken (missing ancestor, bad level)"""


class UnknownAccountError(DataValidationError):
    def __init__(self, code, message: Optional[str] = None):
        self.code = code
        super().__init__(message or f"Unknown account code {code}")


class EntryValidationError(DataValidationError):
    """Raised when accounting entries are rejected during aggregation"""

    def __init__(self, message: str, rejected: Optional[List[dict]] = None):
        self.rejected = rejected or []
        super().__init__(message)


class ExpressionSyntaxError(DataValidationError):
    def __init__(self, message: str, position: int):
        # 1-based column; len(text) + 1 means end of input
        self.position = position
        super().__init__(f"{message} at offset {position}")


class UnbalancedParenthesisError(ExpressionSyntaxError):
    pass


class InsufficientHistoryError(DataValidationError):
    def __init__(self, company_id: str, message: str):
        self.company_id = company_id
        super().__init__(f"Company {company_id}: {message}")


class MissingArtifactError(PipelineError):
    def __init__(self, path, stage: Optional[str] = None):
        self.path = str(path)
        self.stage = stage
        hint = f" (run the stage that produces it before '{stage}')" if stage else ""
        super().__init__(f"Missing input file: {self.path}{hint}")
