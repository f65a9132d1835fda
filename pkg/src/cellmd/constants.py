"""Physical constants and unit conversions.

Internal unit system: lengths in angstrom, time in femtoseconds, mass in
unified atomic mass units, charge in elementary charges, energy in kcal/mol.
"""

import math

# Multiplying a force in kcal/(mol*A) by this and dividing by mass in amu
# gives acceleration in A/fs^2.  (1 kcal = 4184 J exactly; N_A * 1 amu is
# 1 g/mol to within 4e-10, so the gram-per-mole coincidence makes the
# factor 4184 * 1e-7.)
ACCEL_CONVERSION = 4.184e-4

# Coulomb energy prefactor: U = COULOMB * q_i * q_j / r  [kcal/mol], with
# charges in e and r in angstrom.
COULOMB = 332.06371

# Expected acceptance fraction when testing uniformly distributed candidate
# pairs from a 3x3x3 block of cutoff-sized cells against the cutoff sphere:
# sphere volume / block volume = (4/3 pi r^3) / 27 r^3.
UNIFORM_PAIR_PASS_RATE = 4.0 * math.pi / 81.0

# Fixed-point emulation of the cheap planar pre-filter: 28 bits total,
# sign + 7 integer bits + 20 fraction bits.  Covers |x| < 128 A, i.e. any
# half-box displacement for boxes up to 256 A per side.
PLANAR_FRACTION_BITS = 20
PLANAR_SCALE = float(1 << PLANAR_FRACTION_BITS)
PLANAR_MAX = (1 << 27) / PLANAR_SCALE  # saturation bound, 128 A
