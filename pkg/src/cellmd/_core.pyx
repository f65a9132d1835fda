# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the hot loops: per-cell pair force passes and grid
charge spread/gather.  Signature-compatible with _kernels_py; accumulation
follows the same canonical traversal order (home cells ascending,
references in slot order, candidates in half-shell enumeration order)."""

from libc.math cimport fabs, floor, frexp, ldexp, sqrt

IMPL_NAME = "compiled"

STATUS_OK = 0
STATUS_SINGULAR = 1

cdef int C_OK = 0
cdef int C_SINGULAR = 1

cdef double PLANAR_SCALE = 1048576.0  # 2^20 fraction scaling
cdef double PLANAR_INV_SCALE = 1.0 / 1048576.0
cdef long long PLANAR_LIMIT = 134217727  # 2^27 - 1, saturation in raw ticks


cdef inline double _quant(double v) noexcept nogil:
    # truncation toward zero equals floor for the non-negative magnitude
    cdef long long ticks = <long long>(fabs(v) * PLANAR_SCALE)
    if ticks > PLANAR_LIMIT:
        ticks = PLANAR_LIMIT
    return ticks * PLANAR_INV_SCALE


cdef inline bint _planar_pass(double dx, double dy, double dz,
                              double c1, double c2, double c3) noexcept nogil:
    cdef double qx = _quant(dx)
    cdef double qy = _quant(dy)
    cdef double qz = _quant(dz)
    return (
        qx < c1 and qy < c1 and qz < c1
        and qx + qy < c2 and qx + qz < c2 and qy + qz < c2
        and qx + qy + qz < c3
    )


cdef inline double _tab(const double[:, ::1] coef, double x,
                        double x_min, long m, int n_coef) noexcept nogil:
    cdef int e
    frexp(x / x_min, &e)
    cdef long s = e - 1
    cdef double sec = x_min * ldexp(1.0, <int>s)
    cdef double h = sec / m
    cdef long i = <long>((x - sec) / h)
    if i > m - 1:
        i = m - 1
    cdef Py_ssize_t g = s * m + i
    cdef double t = x - (sec + i * h)
    cdef double v = coef[g, n_coef - 1]
    cdef int k
    for k in range(n_coef - 2, -1, -1):
        v = v * t + coef[g, k]
    return v


def rl_cell_direct(
    long c,
    const long[::1] start, const long[::1] rows,
    const double[:, ::1] pos, const double[::1] charge, const long[::1] typ,
    const double[:, ::1] a_tab, const double[:, ::1] b_tab,
    const long[:, ::1] hs_cells, const double[:, :, ::1] hs_shift,
    double rc2, double coul, int use_planar, double cutoff,
    double[:, ::1] forces, double[::1] acc,
):
    cdef double c1 = cutoff
    cdef double c2 = sqrt(2.0) * cutoff
    cdef double c3 = sqrt(3.0) * cutoff
    cdef long s0 = start[c], s1 = start[c + 1]
    cdef long m = s1 - s0
    if m == 0:
        return 0
    cdef double energy = 0.0
    cdef long candidates = 0, passed = 0, accepted = 0
    cdef long ii, jj, cidx, cc, slot, arow, brow
    cdef double ax, ay, az, qa, dx, dy, dz, r2, sx, sy, sz
    cdef double a, b, qq, inv, inv3, rinv, scalar
    cdef long ta
    cdef int status = C_OK

    with nogil:
        for ii in range(m):
            arow = rows[s0 + ii]
            ax = pos[arow, 0]; ay = pos[arow, 1]; az = pos[arow, 2]
            qa = charge[arow]; ta = typ[arow]
            for jj in range(ii + 1, m):
                brow = rows[s0 + jj]
                dx = ax - pos[brow, 0]; dy = ay - pos[brow, 1]; dz = az - pos[brow, 2]
                candidates += 1
                r2 = dx * dx + dy * dy + dz * dz
                if use_planar:
                    if not _planar_pass(dx, dy, dz, c1, c2, c3):
                        continue
                    passed += 1
                if r2 >= rc2:
                    continue
                if not use_planar:
                    passed += 1
                accepted += 1
                if r2 == 0.0:
                    status = C_SINGULAR
                    break
                a = a_tab[ta, typ[brow]]; b = b_tab[ta, typ[brow]]
                qq = coul * qa * charge[brow]
                inv = 1.0 / r2; inv3 = inv * inv * inv; rinv = sqrt(inv)
                scalar = a * inv3 * inv3 * inv + b * inv3 * inv + qq * inv * rinv
                energy += (a / 12.0) * inv3 * inv3 + (b / 6.0) * inv3 + qq * rinv
                forces[arow, 0] += scalar * dx; forces[brow, 0] -= scalar * dx
                forces[arow, 1] += scalar * dy; forces[brow, 1] -= scalar * dy
                forces[arow, 2] += scalar * dz; forces[brow, 2] -= scalar * dz
            if status != C_OK:
                break
            for cidx in range(13):
                cc = hs_cells[c, cidx]
                sx = hs_shift[c, cidx, 0]; sy = hs_shift[c, cidx, 1]; sz = hs_shift[c, cidx, 2]
                for slot in range(start[cc], start[cc + 1]):
                    brow = rows[slot]
                    dx = ax - (pos[brow, 0] + sx)
                    dy = ay - (pos[brow, 1] + sy)
                    dz = az - (pos[brow, 2] + sz)
                    candidates += 1
                    r2 = dx * dx + dy * dy + dz * dz
                    if use_planar:
                        if not _planar_pass(dx, dy, dz, c1, c2, c3):
                            continue
                        passed += 1
                    if r2 >= rc2:
                        continue
                    if not use_planar:
                        passed += 1
                    accepted += 1
                    if r2 == 0.0:
                        status = C_SINGULAR
                        break
                    a = a_tab[ta, typ[brow]]; b = b_tab[ta, typ[brow]]
                    qq = coul * qa * charge[brow]
                    inv = 1.0 / r2; inv3 = inv * inv * inv; rinv = sqrt(inv)
                    scalar = a * inv3 * inv3 * inv + b * inv3 * inv + qq * inv * rinv
                    energy += (a / 12.0) * inv3 * inv3 + (b / 6.0) * inv3 + qq * rinv
                    forces[arow, 0] += scalar * dx; forces[brow, 0] -= scalar * dx
                    forces[arow, 1] += scalar * dy; forces[brow, 1] -= scalar * dy
                    forces[arow, 2] += scalar * dz; forces[brow, 2] -= scalar * dz
                if status != C_OK:
                    break
            if status != C_OK:
                break
    acc[0] += energy
    acc[1] += candidates
    acc[2] += passed
    acc[3] += accepted
    return status


def rl_cell_interp(
    long c,
    const long[::1] start, const long[::1] rows,
    const double[:, ::1] pos, const double[::1] charge, const long[::1] typ,
    const double[:, ::1] a_tab, const double[:, ::1] b_tab,
    const long[:, ::1] hs_cells, const double[:, :, ::1] hs_shift,
    double rc2, double coul, int use_planar, double cutoff,
    const double[:, :, ::1] coef, double x_min, long m_intervals, int n_coef,
    double[:, ::1] forces, double[::1] acc,
):
    cdef double c1 = cutoff
    cdef double c2 = sqrt(2.0) * cutoff
    cdef double c3 = sqrt(3.0) * cutoff
    cdef long s0 = start[c], s1 = start[c + 1]
    cdef long m = s1 - s0
    if m == 0:
        return 0
    cdef const double[:, ::1] tab14 = coef[0]
    cdef const double[:, ::1] tab8 = coef[1]
    cdef const double[:, ::1] tab3 = coef[2]
    cdef double energy = 0.0
    cdef long candidates = 0, passed = 0, accepted = 0
    cdef long ii, jj, cidx, cc, slot, arow, brow
    cdef double ax, ay, az, qa, dx, dy, dz, r2, sx, sy, sz
    cdef double a, b, qq, inv, inv3, scalar
    cdef long ta
    cdef int status = C_OK

    with nogil:
        for ii in range(m):
            arow = rows[s0 + ii]
            ax = pos[arow, 0]; ay = pos[arow, 1]; az = pos[arow, 2]
            qa = charge[arow]; ta = typ[arow]
            for jj in range(ii + 1, m):
                brow = rows[s0 + jj]
                dx = ax - pos[brow, 0]; dy = ay - pos[brow, 1]; dz = az - pos[brow, 2]
                candidates += 1
                r2 = dx * dx + dy * dy + dz * dz
                if use_planar:
                    if not _planar_pass(dx, dy, dz, c1, c2, c3):
                        continue
                    passed += 1
                if r2 >= rc2:
                    continue
                if not use_planar:
                    passed += 1
                accepted += 1
                if r2 < x_min:
                    status = C_SINGULAR
                    break
                a = a_tab[ta, typ[brow]]; b = b_tab[ta, typ[brow]]
                qq = coul * qa * charge[brow]
                scalar = (
                    a * _tab(tab14, r2, x_min, m_intervals, n_coef)
                    + b * _tab(tab8, r2, x_min, m_intervals, n_coef)
                    + qq * _tab(tab3, r2, x_min, m_intervals, n_coef)
                )
                inv = 1.0 / r2; inv3 = inv * inv * inv
                energy += (a / 12.0) * inv3 * inv3 + (b / 6.0) * inv3 + qq * sqrt(inv)
                forces[arow, 0] += scalar * dx; forces[brow, 0] -= scalar * dx
                forces[arow, 1] += scalar * dy; forces[brow, 1] -= scalar * dy
                forces[arow, 2] += scalar * dz; forces[brow, 2] -= scalar * dz
            if status != C_OK:
                break
            for cidx in range(13):
                cc = hs_cells[c, cidx]
                sx = hs_shift[c, cidx, 0]; sy = hs_shift[c, cidx, 1]; sz = hs_shift[c, cidx, 2]
                for slot in range(start[cc], start[cc + 1]):
                    brow = rows[slot]
                    dx = ax - (pos[brow, 0] + sx)
                    dy = ay - (pos[brow, 1] + sy)
                    dz = az - (pos[brow, 2] + sz)
                    candidates += 1
                    r2 = dx * dx + dy * dy + dz * dz
                    if use_planar:
                        if not _planar_pass(dx, dy, dz, c1, c2, c3):
                            continue
                        passed += 1
                    if r2 >= rc2:
                        continue
                    if not use_planar:
                        passed += 1
                    accepted += 1
                    if r2 < x_min:
                        status = C_SINGULAR
                        break
                    a = a_tab[ta, typ[brow]]; b = b_tab[ta, typ[brow]]
                    qq = coul * qa * charge[brow]
                    scalar = (
                        a * _tab(tab14, r2, x_min, m_intervals, n_coef)
                        + b * _tab(tab8, r2, x_min, m_intervals, n_coef)
                        + qq * _tab(tab3, r2, x_min, m_intervals, n_coef)
                    )
                    inv = 1.0 / r2; inv3 = inv * inv * inv
                    energy += (a / 12.0) * inv3 * inv3 + (b / 6.0) * inv3 + qq * sqrt(inv)
                    forces[arow, 0] += scalar * dx; forces[brow, 0] -= scalar * dx
                    forces[arow, 1] += scalar * dy; forces[brow, 1] -= scalar * dy
                    forces[arow, 2] += scalar * dz; forces[brow, 2] -= scalar * dz
                if status != C_OK:
                    break
            if status != C_OK:
                break
    acc[0] += energy
    acc[1] += candidates
    acc[2] += passed
    acc[3] += accepted
    return status


cdef inline void _weights(double t, double* w) noexcept nogil:
    cdef double t2 = t * t
    cdef double t3 = t2 * t
    w[0] = -0.5 * t3 + t2 - 0.5 * t
    w[1] = 1.5 * t3 - 2.5 * t2 + 1.0
    w[2] = -1.5 * t3 + 2.0 * t2 + 0.5 * t
    w[3] = 0.5 * t3 - 0.5 * t2


cdef inline void _support(double coord, double spacing, long k, long* nodes,
                          double* t) noexcept nogil:
    cdef double s = coord / spacing
    cdef long base = <long>floor(s)
    t[0] = s - base
    cdef long j, v
    for j in range(4):
        v = (base - 1 + j) % k
        if v < 0:
            v += k
        nodes[j] = v


def spread_charge(
    const double[:, ::1] pos, const double[::1] charge,
    const double[::1] lengths, double[:, :, ::1] grid,
):
    cdef long k = grid.shape[0]
    cdef double hx = lengths[0] / k, hy = lengths[1] / k, hz = lengths[2] / k
    cdef long n = pos.shape[0]
    cdef long p, i, j, l
    cdef long nx[4]
    cdef long ny[4]
    cdef long nz[4]
    cdef double wx[4]
    cdef double wy[4]
    cdef double wz[4]
    cdef double tx, ty, tz, q, qw
    with nogil:
        for p in range(n):
            _support(pos[p, 0], hx, k, nx, &tx)
            _support(pos[p, 1], hy, k, ny, &ty)
            _support(pos[p, 2], hz, k, nz, &tz)
            _weights(tx, wx); _weights(ty, wy); _weights(tz, wz)
            q = charge[p]
            for i in range(4):
                for j in range(4):
                    qw = q * wx[i] * wy[j]
                    for l in range(4):
                        grid[nx[i], ny[j], nz[l]] += qw * wz[l]


def gather_forces(
    const double[:, ::1] pos, const double[::1] charge,
    const double[::1] lengths,
    const double[:, :, ::1] ex, const double[:, :, ::1] ey,
    const double[:, :, ::1] ez, const double[:, :, ::1] pot,
    double[:, ::1] out_forces, double[::1] out_pot,
):
    cdef long k = pot.shape[0]
    cdef double hx = lengths[0] / k, hy = lengths[1] / k, hz = lengths[2] / k
    cdef long n = pos.shape[0]
    cdef long p, i, j, l
    cdef long nx[4]
    cdef long ny[4]
    cdef long nz[4]
    cdef double wx[4]
    cdef double wy[4]
    cdef double wz[4]
    cdef double tx, ty, tz, w, fx, fy, fz, phi
    with nogil:
        for p in range(n):
            _support(pos[p, 0], hx, k, nx, &tx)
            _support(pos[p, 1], hy, k, ny, &ty)
            _support(pos[p, 2], hz, k, nz, &tz)
            _weights(tx, wx); _weights(ty, wy); _weights(tz, wz)
            fx = 0.0; fy = 0.0; fz = 0.0; phi = 0.0
            for i in range(4):
                for j in range(4):
                    for l in range(4):
                        w = wx[i] * wy[j] * wz[l]
                        phi += w * pot[nx[i], ny[j], nz[l]]
                        fx += w * ex[nx[i], ny[j], nz[l]]
                        fy += w * ey[nx[i], ny[j], nz[l]]
                        fz += w * ez[nx[i], ny[j], nz[l]]
            out_pot[p] = phi
            out_forces[p, 0] = charge[p] * fx
            out_forces[p, 1] = charge[p] * fy
            out_forces[p, 2] = charge[p] * fz
