"""Calendar arithmetic via Julian Day Numbers (Fliegel & Van Flandern).

Integer-only; independent of the datetime module used by the package.
"""


def to_jdn(y: int, m: int, d: int) -> int:
    a = (14 - m) // 12
    yy = y + 4800 - a
    mm = m + 12 * a - 3
    return d + (153 * mm + 2) // 5 + 365 * yy + yy // 4 - yy // 100 + yy // 400 - 32045


def from_jdn(j: int) -> tuple[int, int, int]:
    a = j + 32044
    b = (4 * a + 3) // 146097
    c = a - 146097 * b // 4
    d = (4 * c + 3) // 1461
    e = c - 1461 * d // 4
    m = (5 * e + 2) // 153
    day = e - (153 * m + 2) // 5 + 1
    month = m + 3 - 12 * (m // 10)
    year = 100 * b + d - 4800 + m // 10
    return year, month, day


def minus_days(yyyymmdd: str, days: int) -> str:
    y, m, d = int(yyyymmdd[:4]), int(yyyymmdd[4:6]), int(yyyymmdd[6:8])
    yy, mm, dd = from_jdn(to_jdn(y, m, d) - days)
    return f"{yy:04d}{mm:02d}{dd:02d}"


def days_between(a: str, b: str) -> int:
    return to_jdn(int(b[:4]), int(b[4:6]), int(b[6:8])) - to_jdn(int(a[:4]), int(a[4:6]), int(a[6:8]))
