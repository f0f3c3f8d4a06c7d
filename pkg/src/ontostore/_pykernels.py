"""Pure-Python versions of the hot loops.

``_ckernels.pyx`` implements the same functions with identical signatures
and results; :mod:`ontostore.kernels` picks one at import time.
"""


def contains_scan(subjects, column, needle):
    """Subjects (in the given order) with some non-blank value containing ``needle``."""
    out = []
    get = column.get
    for s in subjects:
        values = get(s)
        if values:
            for v in values:
                if v[0] != 1 and needle in v[1]:
                    out.append(s)
                    break
    return out


def expand_star(records, subj_slot, steps, width, type_values):
    """Rows produced by matching one star of patterns against each record.

    ``steps`` is a sequence of ``(prop, const, slot)``: ``prop`` is the
    property IRI (``None`` for rdf:type), ``const`` the required object term
    or ``None``, ``slot`` the row position the object binds (``-1`` if the
    object is constant).  ``type_values(record)`` gives the record's class
    terms, superclasses included.  ``subj_slot`` is ``-1`` for a constant
    subject.  Rows are tuples of ``width`` terms.
    """
    out = []
    for rec, subj in records:
        props = rec.properties
        partial = [None] * width
        if subj_slot >= 0:
            partial[subj_slot] = subj
        rows = [partial]
        types = None
        for prop, const, slot in steps:
            if prop is None:
                if types is None:
                    types = type_values(rec)
                values = types
            else:
                values = props.get(prop)
                if not values:
                    rows = None
                    break
            if const is not None:
                if const not in values:
                    rows = None
                    break
                continue
            grown = []
            for row in rows:
                cur = row[slot]
                if cur is not None:
                    if cur in values:
                        grown.append(row)
                    continue
                if len(values) == 1:
                    row[slot] = values[0]
                    grown.append(row)
                else:
                    for v in values:
                        nrow = list(row)
                        nrow[slot] = v
                        grown.append(nrow)
            rows = grown
            if not rows:
                break
        if rows:
            for row in rows:
                out.append(tuple(row))
    return out


def hash_join(left, right, lkey, rkey, rextra):
    """Inner equi-join; output rows are ``left_row + right_row[rextra]``."""
    table = {}
    if len(rkey) == 1:
        k0 = rkey[0]
        for r in right:
            table.setdefault(r[k0], []).append(tuple([r[i] for i in rextra]))
    else:
        for r in right:
            table.setdefault(tuple([r[i] for i in rkey]), []).append(tuple([r[i] for i in rextra]))
    out = []
    if len(lkey) == 1:
        k0 = lkey[0]
        for row in left:
            matches = table.get(row[k0])
            if matches:
                for extra in matches:
                    out.append(row + extra)
    else:
        for row in left:
            matches = table.get(tuple([row[i] for i in lkey]))
            if matches:
                for extra in matches:
                    out.append(row + extra)
    return out


def project(rows, pick):
    return [tuple([r[i] for i in pick]) for r in rows]
