"""Jet variables and the classification of derivatives against a gradient state space.

A jet variable is a partial derivative of a field, identified by the field
name and the orders of time and space differentiation.  Mixed derivatives
commute by construction: there is exactly one representation per (field,
t order, x order) triple, so rho_tx and rho_xt are the same object.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field


class StateSpaceError(ValueError):
    """Raised when a state space or classification request is ill-formed."""


@dataclass(frozen=True)
class JetVariable:
    field: str
    t_order: int = 0
    x_order: int = 0

    def __post_init__(self) -> None:
        if not self.field or not self.field[0].isalpha():
            raise StateSpaceError(f"invalid field name {self.field!r}")
        if self.t_order < 0 or self.x_order < 0:
            raise StateSpaceError(f"negative derivative order on {self.field!r}")

    def dt(self) -> "JetVariable":
        return JetVariable(self.field, self.t_order + 1, self.x_order)

    def dx(self, n: int = 1) -> "JetVariable":
        return JetVariable(self.field, self.t_order, self.x_order + n)

    @property
    def is_field(self) -> bool:
        return self.t_order == 0 and self.x_order == 0

    def text(self) -> str:
        if self.is_field:
            return self.field
        return self.field + "_" + "t" * self.t_order + "x" * self.x_order

    def sort_key(self) -> tuple:
        return (self.field, self.t_order, self.x_order)

    def __repr__(self) -> str:
        return f"Jet({self.text()})"


def jet(field: str, t: int = 0, x: int = 0) -> JetVariable:
    return JetVariable(field, t, x)


@dataclass(frozen=True)
class StateSpace:
    """A gradient state space: spatial jets of the fields up to order `order`.

    `members` holds every state variable, including the order-zero ones.
    Time derivatives never belong to a state space.
    """

    order: int
    members: frozenset[JetVariable]

    def __init__(self, order: int, members) -> None:
        object.__setattr__(self, "order", order)
        object.__setattr__(self, "members", frozenset(members))
        self._validate()

    def _validate(self) -> None:
        if self.order < 0:
            raise StateSpaceError("state space order must be nonnegative")
        if not self.members:
            raise StateSpaceError("state space is empty")
        for w in self.members:
            if w.t_order != 0:
                raise StateSpaceError(f"state variable {w.text()} carries a time derivative")
            if w.x_order > self.order:
                raise StateSpaceError(
                    f"state variable {w.text()} exceeds the declared order {self.order}"
                )
        if not self.level(self.order):
            raise StateSpaceError(
                f"no state variable of order {self.order}: declared order is overstated"
            )

    def level(self, k: int) -> frozenset[JetVariable]:
        """State variables whose spatial order is exactly k."""
        return frozenset(w for w in self.members if w.x_order == k)

    def max_order_of(self, field: str) -> int | None:
        """Largest spatial order at which `field` enters the state space."""
        orders = [w.x_order for w in self.members if w.field == field]
        return max(orders) if orders else None

    def sorted_members(self) -> list[JetVariable]:
        return sorted(self.members, key=JetVariable.sort_key)

    def __contains__(self, w: JetVariable) -> bool:
        return w in self.members


def compute_hat(space: StateSpace) -> frozenset[JetVariable]:
    """State variables none of whose proper spatial derivatives are state variables.

    A variable w of level k qualifies when d^h w / dx^h is outside the state
    space for every h = 1 .. order - k.  The top level always qualifies.
    """
    out = set()
    for w in space.members:
        k = w.x_order
        if all(w.dx(h) not in space for h in range(1, space.order - k + 1)):
            out.add(w)
    return frozenset(out)


@dataclass(frozen=True)
class DerivativeClassification:
    """Partition of the derivatives occurring in a constrained entropy inequality.

    highest: derivatives that occur linearly and can be assigned arbitrary
        values at a point, so their coefficients must vanish.
    higher: spatial derivatives above the state space but below the highest
        ones; they enter polynomially up to degree order + 1.
    """

    state: frozenset[JetVariable]
    highest: frozenset[JetVariable]
    higher: frozenset[JetVariable]
    hat: frozenset[JetVariable]

    def sorted_highest(self) -> list[JetVariable]:
        return sorted(self.highest, key=JetVariable.sort_key)

    def sorted_higher(self) -> list[JetVariable]:
        return sorted(self.higher, key=JetVariable.sort_key)

    def sorted_hat(self) -> list[JetVariable]:
        return sorted(self.hat, key=JetVariable.sort_key)


def classify(space: StateSpace, fields: list[str]) -> DerivativeClassification:
    """Split derivatives into highest and higher relative to `space`.

    Classification keys on jets, never on bare fields: the time derivative of
    a field is highest even when the field itself is not a state variable
    (only its gradient is, as happens for a velocity).
    """
    for w in space.members:
        if w.field not in fields:
            raise StateSpaceError(f"state variable {w.text()} names an unknown field")
    r = space.order
    hat = compute_hat(space)
    highest: set[JetVariable] = set()
    higher: set[JetVariable] = set()

    if r == 0:
        # Degenerate case without gradient extensions: every first spatial
        # derivative occurs linearly, whether or not the field is a state
        # variable, and there is no intermediate band.
        for f in fields:
            highest.add(JetVariable(f, 1, 0))
            highest.add(JetVariable(f, 0, 1))
        return DerivativeClassification(space.members, frozenset(highest), frozenset(), hat)

    for f in fields:
        for k in range(r + 1):
            highest.add(JetVariable(f, 1, k))
    top_order: dict[str, int] = {}
    for w in hat:
        cap = w.x_order + r + 1
        highest.add(JetVariable(w.field, 0, cap))
        top_order[w.field] = max(top_order.get(w.field, 0), cap)
    for f in fields:
        base = space.max_order_of(f)
        if base is None or f not in top_order:
            continue
        for k in range(base + 1, top_order[f]):
            w = JetVariable(f, 0, k)
            if w not in space:
                higher.add(w)
    return DerivativeClassification(space.members, frozenset(highest), frozenset(higher), hat)
