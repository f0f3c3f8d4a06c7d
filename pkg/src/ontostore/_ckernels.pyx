# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled versions of the hot loops in ``_pykernels``; same signatures and results."""


def contains_scan(subjects, column, needle):
    cdef list out = []
    cdef dict col = column
    cdef str n = needle
    cdef object values
    cdef object v
    for s in subjects:
        values = col.get(s)
        if values:
            for v in values:
                if <int>v[0] != 1 and n in <str>v[1]:
                    out.append(s)
                    break
    return out


def expand_star(records, Py_ssize_t subj_slot, steps, Py_ssize_t width, type_values):
    cdef list out = []
    cdef list rows, grown, partial, row, nrow
    cdef dict props
    cdef object values, types, cur, const, prop
    cdef Py_ssize_t slot, n
    cdef list step_list = [tuple(s) for s in steps]
    for rec, subj in records:
        props = rec.properties
        partial = [None] * width
        if subj_slot >= 0:
            partial[subj_slot] = subj
        rows = [partial]
        types = None
        for prop, const, slot in step_list:
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
            n = len(values)
            for row in rows:
                cur = row[slot]
                if cur is not None:
                    if cur in values:
                        grown.append(row)
                    continue
                if n == 1:
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
    cdef dict table = {}
    cdef list out = []
    cdef tuple r, row, extra
    cdef list matches
    cdef Py_ssize_t k0
    cdef tuple rx = tuple(rextra)
    cdef tuple lk = tuple(lkey)
    cdef tuple rk = tuple(rkey)
    if len(rk) == 1:
        k0 = rk[0]
        for r in right:
            table.setdefault(r[k0], []).append(tuple([r[i] for i in rx]))
    else:
        for r in right:
            table.setdefault(tuple([r[i] for i in rk]), []).append(tuple([r[i] for i in rx]))
    if len(lk) == 1:
        k0 = lk[0]
        for row in left:
            matches = table.get(row[k0])
            if matches:
                for extra in matches:
                    out.append(row + extra)
    else:
        for row in left:
            matches = table.get(tuple([row[i] for i in lk]))
            if matches:
                for extra in matches:
                    out.append(row + extra)
    return out


def project(rows, pick):
    cdef tuple p = tuple(pick)
    cdef tuple r
    return [tuple([r[i] for i in p]) for r in rows]
