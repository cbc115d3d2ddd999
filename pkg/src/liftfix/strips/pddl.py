"""Reader and writer for a small typed-STRIPS PDDL subset.

Supported: :requirements limited to :strips and :typing, a :types tree,
:predicates with typed variables, and actions whose precondition is a
conjunction of positive atoms and whose effect is a conjunction of atoms
and (not atom) deletes. Atom arguments may be written with or without the
leading ``?``. Bare names in :types are read as tree roots; ``object`` is
always present as a root. Not supported: negative preconditions,
conditional effects, equality, quantifiers, constants in atoms.

A domain file in this subset carries both the vocabulary and a full action
model, so parsing returns the pair.
"""

from __future__ import annotations

from .types import (
    ActionSchema,
    Domain,
    DomainError,
    Instance,
    LiftedModel,
    ParameterBinding,
    ParameterBoundPredicate,
    Predicate,
    TypeTree,
    binding_is_valid,
)


class PddlError(ValueError):
    """Input text is outside the supported subset or malformed."""


def _tokenize(text: str) -> list[str]:
    out: list[str] = []
    for raw_line in text.splitlines():
        line = raw_line.split(";", 1)[0]
        out.extend(line.replace("(", " ( ").replace(")", " ) ").split())
    return out


def _parse_sexp(tokens: list[str], pos: int = 0):
    if pos >= len(tokens):
        raise PddlError("unexpected end of input")
    tok = tokens[pos]
    if tok == "(":
        items = []
        pos += 1
        while pos < len(tokens) and tokens[pos] != ")":
            item, pos = _parse_sexp(tokens, pos)
            items.append(item)
        if pos >= len(tokens):
            raise PddlError("unbalanced parentheses")
        return items, pos + 1
    if tok == ")":
        raise PddlError("unexpected ')'")
    return tok, pos + 1


def _read_top(text: str) -> list:
    tokens = _tokenize(text)
    sexp, pos = _parse_sexp(tokens)
    if pos != len(tokens):
        raise PddlError("trailing tokens after top-level form")
    if not isinstance(sexp, list) or not sexp or sexp[0] != "define":
        raise PddlError("expected a (define ...) form")
    return sexp


def _typed_names(items: list) -> list[tuple[str, str | None]]:
    """Parse a PDDL typed list into (name, declared type or None) pairs."""
    out: list[tuple[str, str | None]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        tok = items[i]
        if tok == "-":
            if i + 1 >= len(items) or not pending:
                raise PddlError("malformed typed list")
            t = items[i + 1]
            if not isinstance(t, str):
                raise PddlError("compound types are not supported")
            out.extend((n, t) for n in pending)
            pending = []
            i += 2
        else:
            if not isinstance(tok, str):
                raise PddlError("malformed typed list")
            pending.append(tok)
            i += 1
    out.extend((n, None) for n in pending)
    return out


def _var(name: str) -> str:
    return name[1:] if name.startswith("?") else name


def parse_domain(text: str) -> tuple[Domain, LiftedModel]:
    """Parse a domain file into its vocabulary and action model."""
    sexp = _read_top(text)
    if not (isinstance(sexp[1], list) and len(sexp[1]) == 2 and sexp[1][0] == "domain"):
        raise PddlError("expected (domain <name>)")
    name = sexp[1][1]

    parent: dict[str, str | None] = {"object": None}
    predicates: list[Predicate] = []
    actions: list[dict] = []

    for section in sexp[2:]:
        if not isinstance(section, list) or not section:
            raise PddlError("malformed domain section")
        head = section[0]
        if head == ":requirements":
            bad = [r for r in section[1:] if r not in (":strips", ":typing")]
            if bad:
                raise PddlError(f"unsupported requirements: {bad}")
        elif head == ":types":
            for t, par in _typed_names(section[1:]):
                parent[t] = par
                if par is not None and par not in parent:
                    parent[par] = None if par == "object" else "object"
        elif head == ":predicates":
            for decl in section[1:]:
                if not isinstance(decl, list) or not decl:
                    raise PddlError("malformed predicate declaration")
                params = tuple(t or "object" for _, t in _typed_names(decl[1:]))
                predicates.append(Predicate(decl[0], params))
        elif head == ":action":
            actions.append(_parse_action(section))
        else:
            raise PddlError(f"unsupported domain section {head!r}")

    # Parents referenced only as parents become roots under object.
    for t, par in list(parent.items()):
        if par is not None and par not in parent:
            parent[par] = "object"
    types = TypeTree(parent)

    schemas = []
    for act in actions:
        schemas.append(ActionSchema(act["name"], tuple(t for _, t in act["params"])))
    domain = Domain(name, types, predicates, schemas)

    pre: dict[str, frozenset] = {}
    add: dict[str, frozenset] = {}
    delete: dict[str, frozenset] = {}
    for act, schema in zip(actions, schemas):
        slot_of = {n: i for i, (n, _) in enumerate(act["params"])}
        pre[schema.name] = frozenset(
            _atom_to_pbp(a, slot_of, schema, domain) for a in act["pre"]
        )
        add[schema.name] = frozenset(
            _atom_to_pbp(a, slot_of, schema, domain) for a in act["add"]
        )
        delete[schema.name] = frozenset(
            _atom_to_pbp(a, slot_of, schema, domain) for a in act["delete"]
        )
    return domain, LiftedModel(domain, pre, add, delete)


def _parse_action(section: list) -> dict:
    body = section[1:]
    if not body or not isinstance(body[0], str):
        raise PddlError("action without a name")
    act = {"name": body[0], "params": [], "pre": [], "add": [], "delete": []}
    i = 1
    while i < len(body):
        key = body[i]
        if key == ":parameters":
            pairs = _typed_names(body[i + 1])
            act["params"] = [(_var(n), t or "object") for n, t in pairs]
        elif key == ":precondition":
            for atom in _conjuncts(body[i + 1]):
                if atom and atom[0] == "not":
                    raise PddlError("negative preconditions are not supported")
                act["pre"].append(atom)
        elif key == ":effect":
            for atom in _conjuncts(body[i + 1]):
                if atom and atom[0] == "not":
                    if len(atom) != 2 or not isinstance(atom[1], list):
                        raise PddlError("malformed delete effect")
                    act["delete"].append(atom[1])
                else:
                    act["add"].append(atom)
        else:
            raise PddlError(f"unsupported action key {key!r}")
        i += 2
    return act


def _conjuncts(form) -> list[list]:
    if not isinstance(form, list):
        raise PddlError("expected an atom or (and ...)")
    if not form:
        return []
    if form[0] == "and":
        for item in form[1:]:
            if not isinstance(item, list):
                raise PddlError("malformed conjunction")
        return list(form[1:])
    return [form]


def _atom_to_pbp(
    atom: list, slot_of: dict[str, int], schema: ActionSchema, domain: Domain
) -> ParameterBoundPredicate:
    if not atom or not isinstance(atom[0], str):
        raise PddlError("malformed atom")
    if atom[0] in ("when", "forall", "exists", "or", "imply", "="):
        raise PddlError(f"unsupported construct {atom[0]!r}")
    pred = domain.predicate(atom[0])
    args = [_var(a) for a in atom[1:]]
    if len(args) != pred.arity:
        raise PddlError(f"atom {atom} has wrong arity for {pred}")
    try:
        slots = tuple(slot_of[a] for a in args)
    except KeyError as e:
        raise PddlError(f"unknown variable {e.args[0]!r} in {atom}") from None
    binding = ParameterBinding(slots)
    if not binding_is_valid(pred, binding, schema, domain.types):
        raise PddlError(f"atom {atom} binds incompatible types in {schema.name}")
    return ParameterBoundPredicate(pred, binding, schema)


def parse_problem(text: str, domain: Domain) -> tuple[str, Instance]:
    """Parse a problem file's :objects into an Instance; :init/:goal are ignored."""
    sexp = _read_top(text)
    if not (isinstance(sexp[1], list) and len(sexp[1]) == 2 and sexp[1][0] == "problem"):
        raise PddlError("expected (problem <name>)")
    name = sexp[1][1]
    objects: dict[str, str] = {}
    for section in sexp[2:]:
        if not isinstance(section, list) or not section:
            raise PddlError("malformed problem section")
        head = section[0]
        if head == ":domain":
            if section[1] != domain.name:
                raise PddlError(
                    f"problem targets domain {section[1]!r}, not {domain.name!r}"
                )
        elif head == ":objects":
            for obj, t in _typed_names(section[1:]):
                objects[obj] = t or "object"
        elif head in (":init", ":goal"):
            pass
        else:
            raise PddlError(f"unsupported problem section {head!r}")
    return name, Instance(domain, objects)


_VARS = "abcdefghijklmnopqrstuvwxyz"


def _atom_str(pbp: ParameterBoundPredicate) -> str:
    args = "".join(f" ?{_VARS[s]}" for s in pbp.binding.slots)
    return f"({pbp.predicate.name}{args})"


def write_domain(domain: Domain, model: LiftedModel) -> str:
    """Deterministic pretty-printer; output parses back to an equal model."""
    lines = [f"(define (domain {domain.name})", "  (:requirements :strips :typing)"]

    by_parent: dict[str, list[str]] = {}
    roots: list[str] = []
    for t in sorted(domain.types.nodes):
        p = domain.types.parent(t)
        if p is None:
            roots.append(t)
        else:
            by_parent.setdefault(p, []).append(t)
    # Typed groups first; bare roots must come last or they would attach to
    # the following group's "- parent" marker when read back.
    type_lines = [
        f"{' '.join(sorted(children))} - {p}" for p, children in sorted(by_parent.items())
    ]
    if roots:
        type_lines.append(" ".join(roots))
    if len(type_lines) == 1:
        lines.append(f"  (:types {type_lines[0]})")
    else:
        lines.append("  (:types")
        lines.extend(f"    {tl}" for tl in type_lines)
        lines.append("  )")

    lines.append("  (:predicates")
    for pred in sorted(domain.predicates, key=lambda p: p.name):
        params = "".join(f" ?{_VARS[i]} - {t}" for i, t in enumerate(pred.params))
        lines.append(f"    ({pred.name}{params})")
    lines.append("  )")

    for schema in sorted(domain.schemas, key=lambda s: s.name):
        pre, add, delete = model.sets_for(schema.name)
        params = " ".join(f"?{_VARS[i]} - {t}" for i, t in enumerate(schema.params))
        key = lambda p: (p.predicate.name, p.binding.slots)
        pre_parts = [_atom_str(p) for p in sorted(pre, key=key)]
        eff_parts = [_atom_str(p) for p in sorted(add, key=key)]
        eff_parts += [f"(not {_atom_str(p)})" for p in sorted(delete, key=key)]
        lines.append(f"  (:action {schema.name}")
        lines.append(f"    :parameters ({params})")
        lines.append(f"    :precondition (and {' '.join(pre_parts)})")
        lines.append(f"    :effect (and {' '.join(eff_parts)})")
        lines.append("  )")
    lines.append(")")
    return "\n".join(lines) + "\n"
