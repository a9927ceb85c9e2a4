"""Human-defined, machine-applied structuring: hierarchies and groups.

The structured model keeps contribution values flat (property label ->
leaf values) and carries all nesting in a single schema tree shared by
every contribution. Transformations edit only the schema, so the leaf
(property, value) multiset per contribution is invariant by construction
and every contribution instantiates the same shape, pruned where values
are absent.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from semtable.annotate import Alignment
from semtable.celltypes import CellType
from semtable.errors import SpecError, ValidationError
from semtable.store import ClassRef, KGStore

GROUP_CLASS = ClassRef("Concept")


@dataclass(frozen=True)
class HierarchySpec:
    """Parent/child property edges; a forest (single parent, acyclic)."""

    edges: tuple[tuple[str, str], ...]


@dataclass(frozen=True)
class GroupSpec:
    """A new concept owning >=2 existing properties."""

    group_label: str
    members: tuple[str, ...]

    def __post_init__(self):
        if not self.group_label.strip():
            raise ValidationError("group label must be non-empty")
        if len(self.members) < 2:
            raise ValidationError("a group needs at least 2 members")
        if len(set(self.members)) != len(self.members):
            raise ValidationError("group members must be pairwise distinct")


@dataclass(frozen=True)
class Violation:
    kind: str  # cycle | multi_parent | unknown_property | label_collision | not_top_level
    detail: str
    refs: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"{self.kind}: {self.detail}"


@dataclass(frozen=True)
class SchemaNode:
    label: str
    kind: str = "property"  # property | group
    column: int | None = None
    predicate_id: str | None = None
    pending_predicate: str | None = None  # label of a predicate to create on integrate
    datatype: CellType | None = None
    concept_entity_id: str | None = None  # group: shared concept, if already in the store
    children: tuple["SchemaNode", ...] = ()


@dataclass(frozen=True)
class LeafValue:
    text: str
    target: Alignment


@dataclass(frozen=True)
class Contribution:
    row: int
    label: str
    values: dict  # property label -> tuple[LeafValue, ...]


@dataclass(frozen=True)
class StructuredModel:
    source_id: str
    metadata: dict
    schema: tuple[SchemaNode, ...]
    contributions: tuple[Contribution, ...]

    def property_labels(self) -> list[str]:
        out: list[str] = []

        def walk(nodes):
            for n in nodes:
                if n.kind == "property":
                    out.append(n.label)
                walk(n.children)

        walk(self.schema)
        return out

    def group_labels(self) -> list[str]:
        out: list[str] = []

        def walk(nodes):
            for n in nodes:
                if n.kind == "group":
                    out.append(n.label)
                walk(n.children)

        walk(self.schema)
        return out

    def top_level_labels(self) -> list[str]:
        return [n.label for n in self.schema]

    def leaf_pairs(self, contribution: Contribution) -> list[tuple[str, str]]:
        """Sorted multiset of (property, value text) pairs for one contribution."""
        pairs = []
        for label, leaves in contribution.values.items():
            for leaf in leaves:
                pairs.append((label, leaf.text))
        return sorted(pairs)

    def node_instantiated(self, node: SchemaNode, contribution: Contribution) -> bool:
        """A node appears for a contribution iff it owns a value there or
        any descendant does (absent values are simply omitted)."""
        if node.kind == "property" and contribution.values.get(node.label):
            return True
        return any(self.node_instantiated(c, contribution) for c in node.children)


def _property_set(table_or_labels) -> list[str]:
    if hasattr(table_or_labels, "header"):
        from semtable.annotate import effective_property_labels

        return effective_property_labels(table_or_labels)
    return list(table_or_labels)


def validate_hierarchy(spec: HierarchySpec, table_or_labels) -> list[Violation]:
    """Check a hierarchy spec against a table's properties.

    Reports cycles (with the offending cycle), multi-parent children, and
    references to unknown properties. An empty list means the spec is ok.
    """
    known = set(_property_set(table_or_labels))
    violations: list[Violation] = []
    parents: dict[str, str] = {}
    adjacency: dict[str, str] = {}
    for parent, child in spec.edges:
        for ref in (parent, child):
            if ref not in known:
                violations.append(
                    Violation("unknown_property", f"{ref!r} is not a property of the table", (ref,))
                )
        if parent == child:
            violations.append(
                Violation("cycle", f"self-edge on {parent!r}", (parent, child))
            )
            continue
        if child in parents and parents[child] != parent:
            violations.append(
                Violation(
                    "multi_parent",
                    f"{child!r} has parents {parents[child]!r} and {parent!r}",
                    (parents[child], parent, child),
                )
            )
            continue
        parents[child] = parent
        adjacency[child] = parent

    # cycle detection over child -> parent links
    seen_cycles = set()
    for start in adjacency:
        path = [start]
        positions = {start: 0}
        node = start
        while node in adjacency:
            node = adjacency[node]
            if node in positions:
                cycle = tuple(path[positions[node]:])
                key = frozenset(cycle)
                if key not in seen_cycles:
                    seen_cycles.add(key)
                    violations.append(
                        Violation("cycle", "cycle through " + " -> ".join(cycle), cycle)
                    )
                break
            positions[node] = len(path)
            path.append(node)
    return violations


def flat_model(
    source_id: str,
    metadata: dict,
    columns: list[SchemaNode],
    contributions: list[Contribution],
) -> StructuredModel:
    return StructuredModel(
        source_id=source_id,
        metadata=dict(metadata),
        schema=tuple(columns),
        contributions=tuple(contributions),
    )


def _find_node(nodes: tuple[SchemaNode, ...], label: str) -> SchemaNode | None:
    for n in nodes:
        if n.label == label:
            return n
        hit = _find_node(n.children, label)
        if hit is not None:
            return hit
    return None


def _remove_top_level(schema: tuple[SchemaNode, ...], labels: set) -> tuple:
    kept = tuple(n for n in schema if n.label not in labels)
    removed = {n.label: n for n in schema if n.label in labels}
    return kept, removed


def _attach_children(node: SchemaNode, extra: list[SchemaNode]) -> SchemaNode:
    return replace(node, children=node.children + tuple(extra))


def apply_hierarchy(spec: HierarchySpec, model: StructuredModel) -> StructuredModel:
    """Nest child properties under their parents, uniformly for every
    contribution. Properties outside the spec stay top-level; the input
    model is unchanged."""
    violations = validate_hierarchy(spec, model.property_labels())
    top = set(model.top_level_labels())
    for parent, child in spec.edges:
        if child in model.property_labels() and child not in top:
            violations.append(
                Violation("not_top_level", f"child {child!r} is already nested", (child,))
            )
    if violations:
        raise SpecError("invalid hierarchy spec", violations)

    children_of: dict[str, list[str]] = {}
    for parent, child in dict.fromkeys(spec.edges):
        children_of.setdefault(parent, []).append(child)

    # walk up the composed parent chain to catch cycles with existing nesting
    schema = model.schema
    moved_labels = {child for _, child in spec.edges}
    kept, removed = _remove_top_level(schema, moved_labels)

    def rebuild(node: SchemaNode) -> SchemaNode:
        extra = [rebuild(removed[c]) for c in children_of.get(node.label, []) if c in removed]
        new_children = tuple(rebuild(c) for c in node.children)
        return replace(node, children=new_children + tuple(extra))

    new_schema = tuple(rebuild(n) for n in kept)
    rebuilt_labels = set(StructuredModel(
        model.source_id, model.metadata, new_schema, ()
    ).property_labels())
    lost = moved_labels - rebuilt_labels
    if lost:
        raise SpecError(
            "invalid hierarchy spec",
            [Violation("cycle", f"edges orphan {sorted(lost)!r} (cyclic nesting)", tuple(sorted(lost)))],
        )
    return replace(model, schema=new_schema)


def apply_grouping(spec: GroupSpec, model: StructuredModel, store: KGStore) -> StructuredModel:
    """Interpose a group node owning the member properties, for every
    contribution. The shared group concept is resolved against the store if
    it already exists; otherwise it is created at integration time."""
    violations: list[Violation] = []
    top = model.top_level_labels()
    for member in spec.members:
        if member not in top:
            violations.append(
                Violation("not_top_level", f"member {member!r} is not a top-level property", (member,))
            )
    if spec.group_label in model.property_labels() or spec.group_label in model.group_labels():
        violations.append(
            Violation(
                "label_collision",
                f"group label {spec.group_label!r} collides with an existing property or group",
                (spec.group_label,),
            )
        )
    if violations:
        raise SpecError("invalid group spec", violations)

    member_set = set(spec.members)
    members_in_order = [n for n in model.schema if n.label in member_set]
    group_node = SchemaNode(
        label=spec.group_label,
        kind="group",
        concept_entity_id=store.find_entity(spec.group_label, GROUP_CLASS),
        children=tuple(members_in_order),
    )
    # the group node takes the position of its first member
    out: list[SchemaNode] = []
    placed = False
    for node in model.schema:
        if node.label in member_set:
            if not placed:
                out.append(group_node)
                placed = True
            continue
        out.append(node)
    return replace(model, schema=tuple(out))
