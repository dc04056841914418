"""Exception hierarchy."""


class PrivFilterError(Exception):
  """Base class for all library errors."""


class DomainError(PrivFilterError, ValueError):
  """A scalar argument is outside its admissible range."""


class InvalidCurveError(PrivFilterError, ValueError):
  """A tradeoff or hockey-stick curve violates its invariants."""


class InvalidPLDError(PrivFilterError, ValueError):
  """A privacy loss distribution violates its invariants."""


class EnumerationGuardError(PrivFilterError):
  """An exhaustive enumeration would exceed the configured size guard."""


class CapacityError(PrivFilterError):
  """A filter received a query after its capacity was exhausted."""


class NotCrossingError(PrivFilterError, ValueError):
  """Two curves were expected to cross but are ordered."""


class SearchFailure(PrivFilterError):
  """A parameter search found no configuration meeting its margins.

  Attributes:
    summary: description of the searched grid and best margins reached.
  """

  def __init__(self, message, summary=None):
    super().__init__(message)
    self.summary = summary or {}


class MalformedStrategyError(PrivFilterError, ValueError):
  """A strategy tree does not match the outcomes of its queries."""


class CurveSpecError(PrivFilterError, ValueError):
  """A command-line curve specification could not be parsed."""
