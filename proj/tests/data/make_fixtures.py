"""Regenerates the synthetic market and county-yield fixtures.

The market file is built so its decade means of stocks and harvest price
match a published descriptive table exactly (1990s corn stocks average 1327
million bushels). Everything else is made up.
"""
import csv
import pathlib

import numpy as np

HERE = pathlib.Path(__file__).resolve().parent
YEARS = list(range(1990, 2019))
STOCK_MEANS = {1990: 1327, 2000: 1598, 2010: 1509}
PRICE_MEANS = {1990: 2.46, 2000: 2.74, 2010: 4.56}
STATES = {"IA": 20, "IL": 20}


def pin_mean(values, target, decimals):
    """Shift values so their mean is exactly `target` once rounded."""
    scale = 10**decimals
    units = np.round((values - values.mean() + target) * scale).astype(np.int64)
    units[-1] += int(round(target * scale)) * len(units) - units.sum()
    return units


def main():
    rng = np.random.default_rng(20190101)
    t = np.arange(len(YEARS))
    decade = np.array([y - y % 10 for y in YEARS])

    production = 7800.0 + 240.0 * t + rng.normal(0.0, 500.0, len(t))
    stocks_raw = 1450.0 + rng.normal(0.0, 380.0, len(t))
    stocks_units = np.empty(len(t), dtype=np.int64)
    for d, target in STOCK_MEANS.items():
        m = decade == d
        stocks_units[m] = pin_mean(stocks_raw[m], target, 0)
    stocks = stocks_units.astype(float)

    ratio = stocks / production
    log_price = 0.9 + 0.03 * t - 2.5 * (ratio - ratio.mean()) + rng.normal(0.0, 0.12, len(t))
    price_raw = np.exp(log_price)
    price_cents = np.empty(len(t), dtype=np.int64)
    for d, target in PRICE_MEANS.items():
        m = decade == d
        price_cents[m] = pin_mean(price_raw[m], target, 2)
    price = price_cents / 100.0
    if (price <= 0).any() or (stocks <= 0).any():
        raise SystemExit("fixture generation produced a nonpositive value")

    iv = np.clip(0.21 - 0.6 * (ratio - ratio.mean()) + rng.normal(0.0, 0.03, len(t)), 0.12, 0.5)
    futures = price * np.exp(rng.normal(0.0, 0.1, len(t)))
    deflator = 1.02 ** (np.array(YEARS) - 2012)

    with open(HERE / "market.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["year", "harvest_price", "feb_futures", "implied_vol", "stocks", "national_production",
                    "gdp_deflator"])
        for i, y in enumerate(YEARS):
            w.writerow([y, f"{price[i]:.2f}", f"{futures[i]:.3f}", f"{iv[i]:.4f}", int(stocks[i]),
                        f"{production[i]:.1f}", f"{deflator[i]:.5f}"])

    detrended_price = np.log(price) - np.polyval(np.polyfit(t, np.log(price), 1), t)
    with open(HERE / "yields.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["year", "state", "county", "yield"])
        for state, n_counties in STATES.items():
            base = rng.uniform(70.0, 140.0, n_counties)
            weather = rng.normal(0.0, 12.0, len(t))
            for j in range(n_counties):
                county = f"{state}{j + 1:03d}"
                for i, y in enumerate(YEARS):
                    # low stocks -> strong price/yield coupling
                    coupling = -60.0 * (1.0 - 2.5 * ratio[i])
                    value = base[j] + 1.5 * t[i] + coupling * detrended_price[i] + weather[i] + rng.normal(0.0, 10.0)
                    w.writerow([y, state, county, f"{max(value, 1.0):.1f}"])


if __name__ == "__main__":
    main()
