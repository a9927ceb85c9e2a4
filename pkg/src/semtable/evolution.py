"""Five-stage evolution model: classification, exports, KG integration.

The stage criteria are mechanical checks over an artifact descriptor; the
normative criterion table ships in the README. Exports are canonical:
the triple serialization sorts unique lines lexicographically so equal
models produce byte-equal output, and `import_triples` inverts it exactly
(export of an imported export is byte-identical).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from urllib.parse import quote, unquote

from semtable.annotate import Alignment
from semtable.celltypes import CellType
from semtable.errors import ClassifyError, IntegrityError
from semtable.similarity import normalize_label
from semtable.store import ClassRef, KGStore, Literal
from semtable.structure import Contribution, LeafValue, SchemaNode, StructuredModel

DEFAULT_NAMESPACE = "http://example.org/kg/"

RDF_TYPE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type"
RDF_VALUE = "http://www.w3.org/1999/02/22-rdf-syntax-ns#value"
XSD = "http://www.w3.org/2001/XMLSchema#"

_XSD_OF_TYPE = {
    CellType.INTEGER: XSD + "integer",
    CellType.DECIMAL: XSD + "decimal",
    CellType.BOOLEAN: XSD + "boolean",
    CellType.DATE: XSD + "date",
    CellType.URL: XSD + "anyURI",
}
_TYPE_OF_XSD = {v: k for k, v in _XSD_OF_TYPE.items()}

ARTIFACT_KINDS = (
    "pdf_ref",
    "tabular_proprietary",
    "tabular_open",
    "semantic_doc",
    "kg_integrated",
)


@dataclass(frozen=True)
class ArtifactDescriptor:
    kind: str
    payload: object = None
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CriterionResult:
    stage: int
    criterion: str
    description: str
    passed: bool
    evidence: str


@dataclass(frozen=True)
class StageReport:
    achieved_stage: int
    criteria: tuple[CriterionResult, ...]

    def stage_passed(self, stage: int) -> bool:
        return all(c.passed for c in self.criteria if c.stage == stage)


@dataclass(frozen=True)
class IntegrationReceipt:
    entities_created: tuple[str, ...]
    predicates_created: tuple[str, ...]
    statements_added: int
    stage_report: StageReport


# ---------------------------------------------------------------------------
# stage classification


def _semantic_evidence(payload) -> tuple[bool, str]:
    """(has >=1 entity alignment or bound predicate, evidence text)."""
    if isinstance(payload, StructuredModel):
        aligned = sum(
            1
            for contrib in payload.contributions
            for leaves in contrib.values.values()
            for leaf in leaves
            if leaf.target.kind == "entity"
        )
        bound = sum(1 for n in _walk_schema(payload.schema) if n.predicate_id)
        return (
            aligned + bound > 0,
            f"{aligned} entity alignment(s), {bound} bound predicate(s)",
        )
    if isinstance(payload, dict):
        aligned = _count_doc_alignments(payload)
        bound = _count_doc_bound(payload)
        return (
            aligned + bound > 0,
            f"{aligned} entity alignment(s), {bound} bound predicate(s)",
        )
    raise ClassifyError(f"semantic document payload of type {type(payload).__name__} is unreadable")


def _walk_schema(nodes):
    for n in nodes:
        yield n
        yield from _walk_schema(n.children)


def _count_doc_alignments(doc: dict) -> int:
    count = 0

    def walk(obj):
        nonlocal count
        if isinstance(obj, dict):
            if obj.get("kind") == "entity":
                count += 1
            for v in obj.values():
                walk(v)
        elif isinstance(obj, list):
            for v in obj:
                walk(v)

    walk(doc.get("contributions", []))
    return count


def _count_doc_bound(doc: dict) -> int:
    count = 0

    def walk(nodes):
        nonlocal count
        for n in nodes:
            if isinstance(n, dict):
                if n.get("predicate_id"):
                    count += 1
                walk(n.get("children", []))

    walk(doc.get("schema", []))
    return count


def classify_stage(artifact: ArtifactDescriptor) -> StageReport:
    """Evaluate the artifact against all five stages' criteria.

    Stages are cumulative: the achieved stage is the largest k whose
    criteria, and all earlier stages' criteria, pass.
    """
    if artifact.kind not in ARTIFACT_KINDS:
        raise ClassifyError(f"unknown artifact kind {artifact.kind!r}")
    meta = artifact.metadata or {}
    results: list[CriterionResult] = []

    identifier = str(meta.get("doi") or meta.get("identifier") or "").strip()
    results.append(
        CriterionResult(
            1,
            "S1.identifier",
            "artifact carries a stable identifier (doi/identifier)",
            bool(identifier),
            f"identifier={identifier!r}" if identifier else "no doi/identifier in metadata",
        )
    )
    title = str(meta.get("title") or "").strip()
    results.append(
        CriterionResult(
            1,
            "S1.citation",
            "citable metadata present (title)",
            bool(title),
            f"title={title!r}" if title else "no title in metadata",
        )
    )

    structured = artifact.kind in (
        "tabular_proprietary",
        "tabular_open",
        "semantic_doc",
        "kg_integrated",
    )
    results.append(
        CriterionResult(
            2,
            "S2.structured_table",
            "knowledge structured in a machine-readable tabular form",
            structured,
            f"artifact kind is {artifact.kind}",
        )
    )

    open_format = artifact.kind in ("tabular_open", "semantic_doc", "kg_integrated")
    results.append(
        CriterionResult(
            3,
            "S3.open_format",
            "open, non-proprietary serialization",
            open_format,
            f"artifact kind is {artifact.kind}",
        )
    )

    if artifact.kind == "semantic_doc":
        semantic, evidence = _semantic_evidence(artifact.payload)
    elif artifact.kind == "kg_integrated":
        store = _integrated_store(artifact)
        entity_objects = sum(
            1 for st in store.statements.values() if isinstance(st.object, str)
        )
        semantic = entity_objects > 0
        evidence = f"{entity_objects} entity-valued statement(s) in the store"
    else:
        semantic, evidence = False, f"artifact kind {artifact.kind} carries no annotations"
    results.append(
        CriterionResult(
            4,
            "S4.semantic_alignment",
            "at least one alignment to the KG (entity link or bound predicate)",
            semantic,
            evidence,
        )
    )
    results.append(
        CriterionResult(
            4,
            "S4.metadata_embedded",
            "identifying metadata travels with the artifact",
            bool(identifier and title),
            "identifier and title present" if identifier and title else "incomplete metadata",
        )
    )
    representable = artifact.kind in ("semantic_doc", "kg_integrated")
    results.append(
        CriterionResult(
            4,
            "S4.hierarchy_representable",
            "the format can represent property hierarchies",
            representable,
            f"artifact kind is {artifact.kind}",
        )
    )

    if artifact.kind == "kg_integrated":
        store = _integrated_store(artifact)
        n = len(store.statements)
        integrated = n > 0
        evidence = f"{n} statement(s) in the store"
    else:
        integrated, evidence = False, f"artifact kind is {artifact.kind}"
    results.append(
        CriterionResult(
            5,
            "S5.kg_integrated",
            "statements committed to the knowledge graph",
            integrated,
            evidence,
        )
    )

    achieved = 0
    report = StageReport(0, tuple(results))
    for stage in (1, 2, 3, 4, 5):
        if report.stage_passed(stage):
            achieved = stage
        else:
            break
    return StageReport(achieved, tuple(results))


def _integrated_store(artifact: ArtifactDescriptor) -> KGStore:
    payload = artifact.payload
    if isinstance(payload, KGStore):
        return payload
    if isinstance(payload, tuple) and payload and isinstance(payload[0], KGStore):
        return payload[0]
    raise ClassifyError("kg_integrated payload must contain a store")


# ---------------------------------------------------------------------------
# URI scheme


def _slug(label: str) -> str:
    return quote(normalize_label(label), safe="")


def _contribution_uri(ns: str, label: str) -> str:
    return f"{ns}contribution/{quote(label, safe='')}"


def _node_uri(ns: str, contribution_label: str, node_label: str) -> str:
    return f"{ns}node/{quote(contribution_label, safe='')}/{_slug(node_label)}"


def _entity_uri(ns: str, label: str) -> str:
    return f"{ns}entity/{_slug(label)}"


def _predicate_uri(ns: str, label: str) -> str:
    return f"{ns}predicate/{_slug(label)}"


def _concept_uri(ns: str, label: str) -> str:
    return f"{ns}concept/{_slug(label)}"


def _contribution_class_uri(ns: str) -> str:
    return f"{ns}class/contribution"


def _property_predicate_label(node: SchemaNode, store: KGStore) -> str:
    if node.predicate_id and node.predicate_id in store.predicates:
        return normalize_label(store.predicates[node.predicate_id].label)
    if node.pending_predicate:
        return normalize_label(node.pending_predicate)
    return normalize_label(node.label)


def _escape_literal(text: str) -> str:
    return (
        text.replace("\\", "\\\\")
        .replace('"', '\\"')
        .replace("\n", "\\n")
        .replace("\r", "\\r")
        .replace("\t", "\\t")
    )


def _unescape_literal(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            out.append({"n": "\n", "r": "\r", "t": "\t", '"': '"', "\\": "\\"}.get(nxt, nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def _object_term(ns: str, target: Alignment, store: KGStore) -> str:
    if target.kind == "entity":
        entity = store.entities.get(target.entity_id)
        label = entity.label if entity else target.entity_id
        return f"<{_entity_uri(ns, label)}>"
    if target.kind == "new_entity":
        return f"<{_entity_uri(ns, target.label)}>"
    lexical = _escape_literal(target.lexical)
    if target.datatype in _XSD_OF_TYPE:
        return f'"{lexical}"^^<{_XSD_OF_TYPE[target.datatype]}>'
    return f'"{lexical}"'


# ---------------------------------------------------------------------------
# exports


def export_triples(model: StructuredModel, store: KGStore, namespace: str = DEFAULT_NAMESPACE) -> bytes:
    """Canonical N-Triples: unique lines, sorted by (s, p, o).

    Counting rule per contribution: one type triple, one line per distinct
    leaf (property, value) pair, one link triple per instantiated container
    node, and link+type triples per instantiated group node.
    """

    ns = namespace
    triples: set[tuple[str, str, str]] = set()

    def emit(s: str, p: str, o: str) -> None:
        triples.add((s, p, o))

    def render(node: SchemaNode, scope: str, contribution: Contribution) -> None:
        if not model.node_instantiated(node, contribution):
            return
        if node.kind == "group":
            uri = _node_uri(ns, contribution.label, node.label)
            emit(scope, _predicate_uri(ns, node.label), f"<{uri}>")
            emit(uri, RDF_TYPE, f"<{_concept_uri(ns, node.label)}>")
            for child in node.children:
                render(child, uri, contribution)
            return
        pred = _predicate_uri(ns, _property_predicate_label(node, store))
        own = contribution.values.get(node.label, ())
        child_instantiated = any(
            model.node_instantiated(c, contribution) for c in node.children
        )
        if child_instantiated:
            uri = _node_uri(ns, contribution.label, node.label)
            emit(scope, pred, f"<{uri}>")
            for leaf in own:
                emit(uri, RDF_VALUE, _object_term(ns, leaf.target, store))
            for child in node.children:
                render(child, uri, contribution)
        else:
            for leaf in own:
                emit(scope, pred, _object_term(ns, leaf.target, store))

    for contribution in model.contributions:
        subject = _contribution_uri(ns, contribution.label)
        emit(subject, RDF_TYPE, f"<{_contribution_class_uri(ns)}>")
        for node in model.schema:
            render(node, subject, contribution)

    return (
        "".join(f"<{s}> <{p}> {o} .\n" for s, p, o in sorted(triples))
    ).encode("utf-8")


def export_semantic_doc(
    model: StructuredModel, store: KGStore, namespace: str = DEFAULT_NAMESPACE
) -> bytes:
    """JSON-LD-shaped document: context, metadata, schema tree, contribution
    trees with typed values; key order is fixed by construction."""

    ns = namespace

    def schema_view(node: SchemaNode) -> dict:
        view = {
            "label": node.label,
            "kind": node.kind,
        }
        if node.kind == "property":
            view["datatype"] = node.datatype.value if node.datatype else None
            view["predicate_id"] = node.predicate_id
            view["predicate"] = _predicate_uri(ns, _property_predicate_label(node, store))
        else:
            view["concept"] = _concept_uri(ns, node.label)
            view["concept_entity_id"] = node.concept_entity_id
        view["children"] = [schema_view(c) for c in node.children]
        return view

    def value_view(target: Alignment) -> dict:
        if target.kind == "entity":
            entity = store.entities.get(target.entity_id)
            label = entity.label if entity else target.entity_id
            return {
                "kind": "entity",
                "id": target.entity_id,
                "label": label,
                "@id": _entity_uri(ns, label),
            }
        if target.kind == "new_entity":
            return {
                "kind": "new_entity",
                "label": target.label,
                "class": target.class_label,
                "@id": _entity_uri(ns, target.label),
            }
        return {
            "kind": "literal",
            "value": target.lexical,
            "datatype": target.datatype.value,
        }

    def node_view(node: SchemaNode, contribution: Contribution) -> dict | None:
        if not model.node_instantiated(node, contribution):
            return None
        children = [
            v for c in node.children if (v := node_view(c, contribution)) is not None
        ]
        view = {"label": node.label, "kind": node.kind}
        if node.kind == "property":
            view["values"] = [
                value_view(leaf.target) for leaf in contribution.values.get(node.label, ())
            ]
        else:
            view["@id"] = _node_uri(ns, contribution.label, node.label)
            view["@type"] = _concept_uri(ns, node.label)
        view["children"] = children
        return view

    context = {
        "type": RDF_TYPE,
        "value": RDF_VALUE,
        "contribution": _contribution_class_uri(ns),
    }
    for node in _walk_schema(model.schema):
        if node.kind == "property":
            context[node.label] = _predicate_uri(ns, _property_predicate_label(node, store))
        else:
            context[node.label] = _concept_uri(ns, node.label)

    doc = {
        "@context": context,
        "id": f"{ns}table/{quote(model.source_id or 'table', safe='')}",
        "metadata": dict(sorted(model.metadata.items())),
        "schema": [schema_view(n) for n in model.schema],
        "contributions": [
            {
                "@id": _contribution_uri(ns, c.label),
                "@type": _contribution_class_uri(ns),
                "label": c.label,
                "row": c.row,
                "properties": [
                    v for n in model.schema if (v := node_view(n, c)) is not None
                ],
            }
            for c in model.contributions
        ],
    }
    return (json.dumps(doc, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


# ---------------------------------------------------------------------------
# triple import (inverse of export_triples)

_TRIPLE_RE = re.compile(
    r"<([^>]*)>\s+<([^>]*)>\s+(?:<([^>]*)>|\"((?:[^\"\\]|\\.)*)\"(?:\^\^<([^>]*)>)?)\s*\.\s*$"
)


def _parse_lines(data: bytes) -> list[tuple]:
    triples = []
    for lineno, line in enumerate(data.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        m = _TRIPLE_RE.match(line)
        if m is None:
            raise IntegrityError(f"line {lineno}: not a valid triple: {line!r}")
        s, p, o_uri, o_lex, o_dt = m.groups()
        if o_uri is not None:
            triples.append((s, p, ("uri", o_uri)))
        else:
            triples.append((s, p, ("literal", _unescape_literal(o_lex), o_dt)))
    return triples


def import_triples(
    data: bytes, namespace: str = DEFAULT_NAMESPACE
) -> tuple[StructuredModel, KGStore]:
    """Rebuild (model, store) from canonical triples.

    Inverse of `export_triples` on its own output: re-exporting the imported
    model yields byte-identical triples.
    """
    ns = namespace
    triples = _parse_lines(data)
    store = KGStore()

    def path(uri: str, prefix: str):
        if uri.startswith(ns + prefix + "/"):
            return uri[len(ns) + len(prefix) + 1 :]
        return None

    def scope_of(uri: str):
        c = path(uri, "contribution")
        if c is not None:
            return ("contribution", unquote(c))
        n = path(uri, "node")
        if n is not None and "/" in n:
            contrib_part, node_part = n.split("/", 1)
            return ("node", unquote(contrib_part), unquote(node_part))
        raise IntegrityError(f"unknown subject uri {uri!r}")

    contributions: dict[str, dict] = {}  # label -> property label -> [(text, target)]
    group_uris: set[str] = set()
    children_of: dict[str, list[str]] = {}
    parent_of: dict[str, str] = {}
    known_properties: dict[str, None] = {}
    known_groups: dict[str, None] = {}
    datatypes: dict[str, CellType] = {}

    def record_edge(parent: str | None, child: str) -> None:
        if parent is None:
            return
        if parent_of.get(child) not in (None, parent):
            raise IntegrityError(f"node {child!r} imported with two parents")
        parent_of[child] = parent
        if child not in children_of.setdefault(parent, []):
            children_of[parent].append(child)

    # pass 1: contributions and group-node identities (from type triples)
    for s, p, o in triples:
        scope = scope_of(s)
        if scope[0] == "contribution":
            contributions.setdefault(scope[1], {})
        if p == RDF_TYPE and o[0] == "uri" and path(o[1], "concept") is not None:
            group_uris.add(s)
            known_groups[scope_of(s)[2]] = None

    # pass 2: structure edges and leaf values
    for s, p, o in triples:
        if p == RDF_TYPE:
            continue
        scope = scope_of(s)
        contrib_label = scope[1]
        holder = contributions.setdefault(contrib_label, {})
        parent_label = scope[2] if scope[0] == "node" else None

        if o[0] == "uri" and path(o[1], "node") is not None:
            node_label = scope_of(o[1])[2]
            if o[1] not in group_uris:
                known_properties[node_label] = None
            record_edge(parent_label, node_label)
            continue

        if p == RDF_VALUE:
            if parent_label is None:
                raise IntegrityError("rdf:value on a non-node subject")
            prop_label = parent_label  # a container node's own value
        else:
            prop_path = path(p, "predicate")
            if prop_path is None:
                raise IntegrityError(f"unknown predicate uri {p!r}")
            prop_label = unquote(prop_path)
            record_edge(parent_label, prop_label)
        known_properties[prop_label] = None

        if o[0] == "uri":
            ent_path = path(o[1], "entity")
            if ent_path is None:
                raise IntegrityError(f"unknown object uri {o[1]!r}")
            label = unquote(ent_path)
            eid = store.upsert_entity(label, origin="machine")
            target = Alignment.entity(eid)
            text = label
        else:
            _, lexical, dt = o
            datatype = _TYPE_OF_XSD.get(dt, CellType.STRING) if dt else CellType.STRING
            target = Alignment.literal(lexical, datatype)
            text = lexical
            datatypes.setdefault(prop_label, datatype)
        holder.setdefault(prop_label, []).append((text, target))

    def build_node(label: str) -> SchemaNode:
        kids = tuple(build_node(c) for c in sorted(children_of.get(label, [])))
        if label in known_groups:
            return SchemaNode(label=label, kind="group", children=kids)
        pid = store.upsert_predicate(label)
        return SchemaNode(
            label=label,
            kind="property",
            predicate_id=pid,
            datatype=datatypes.get(label, CellType.STRING),
            children=kids,
        )

    all_labels = list(known_properties) + [g for g in known_groups if g not in known_properties]
    top = sorted(lbl for lbl in all_labels if lbl not in parent_of)
    schema = tuple(build_node(lbl) for lbl in top)

    contribs = []
    for row, label in enumerate(sorted(contributions)):
        values = {
            prop: tuple(
                LeafValue(text=text, target=target)
                for text, target in sorted(pairs, key=lambda pair: pair[0])
            )
            for prop, pairs in sorted(contributions[label].items())
        }
        contribs.append(Contribution(row=row, label=label, values=values))

    model = StructuredModel(
        source_id="", metadata={}, schema=schema, contributions=tuple(contribs)
    )
    return model, store


# ---------------------------------------------------------------------------
# integration


TYPE_PREDICATE_LABEL = "type"
VALUE_PREDICATE_LABEL = "value"
CONTRIBUTION_CLASS = ClassRef("Class")
NODE_CLASS = ClassRef("Node")
CONCEPT_CLASS = ClassRef("Concept")


def integrate(model: StructuredModel, store: KGStore) -> IntegrationReceipt:
    """Commit the model's statements into the store, with dedup everywhere:
    integrating the same model twice adds nothing new."""
    entities_before = set(store.entities)
    predicates_before = set(store.predicates)
    statements_before = set(store.statements)

    type_pid = store.upsert_predicate(TYPE_PREDICATE_LABEL)
    value_pid = store.upsert_predicate(VALUE_PREDICATE_LABEL)
    contribution_class = store.upsert_entity(
        "contribution", class_ref=CONTRIBUTION_CLASS, origin="machine"
    )

    def resolve_target(target: Alignment):
        if target.kind == "entity":
            if target.entity_id not in store.entities:
                raise IntegrityError(f"model references missing entity {target.entity_id!r}")
            return target.entity_id
        if target.kind == "new_entity":
            cref = ClassRef(target.class_label) if target.class_label else None
            return store.upsert_entity(target.label, class_ref=cref, origin="human")
        return Literal(target.lexical, target.datatype)

    def property_pid(node: SchemaNode) -> str:
        if node.predicate_id:
            if node.predicate_id not in store.predicates:
                raise IntegrityError(
                    f"model references missing predicate {node.predicate_id!r}"
                )
            return node.predicate_id
        return store.upsert_predicate(node.pending_predicate or node.label)

    def render(node: SchemaNode, scope_id: str, contribution: Contribution) -> None:
        if not model.node_instantiated(node, contribution):
            return
        if node.kind == "group":
            concept_id = store.upsert_entity(node.label, class_ref=CONCEPT_CLASS, origin="human")
            instance_id = store.upsert_entity(
                f"{contribution.label} / {node.label}", class_ref=CONCEPT_CLASS, origin="machine"
            )
            group_pid = store.upsert_predicate(node.label)
            store.add_statement(scope_id, group_pid, instance_id)
            store.add_statement(instance_id, type_pid, concept_id)
            for child in node.children:
                render(child, instance_id, contribution)
            return
        pid = property_pid(node)
        own = contribution.values.get(node.label, ())
        child_instantiated = any(
            model.node_instantiated(c, contribution) for c in node.children
        )
        if child_instantiated:
            node_id = store.upsert_entity(
                f"{contribution.label} / {node.label}", class_ref=NODE_CLASS, origin="machine"
            )
            store.add_statement(scope_id, pid, node_id)
            for leaf in own:
                store.add_statement(node_id, value_pid, resolve_target(leaf.target))
            for child in node.children:
                render(child, node_id, contribution)
        else:
            for leaf in own:
                store.add_statement(scope_id, pid, resolve_target(leaf.target))

    for contribution in model.contributions:
        contrib_id = store.upsert_entity(
            contribution.label, class_ref=ClassRef("Contribution"), origin="machine"
        )
        store.add_statement(contrib_id, type_pid, contribution_class)
        for node in model.schema:
            render(node, contrib_id, contribution)

    descriptor = ArtifactDescriptor(
        kind="kg_integrated", payload=(store, model), metadata=model.metadata
    )
    return IntegrationReceipt(
        entities_created=tuple(sorted(set(store.entities) - entities_before)),
        predicates_created=tuple(sorted(set(store.predicates) - predicates_before)),
        statements_added=len(set(store.statements) - statements_before),
        stage_report=classify_stage(descriptor),
    )
