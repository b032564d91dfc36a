#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sqr {

/// National yearly series. Prices in $/bushel, implied volatility as an
/// annualized fraction, stocks and national production in the same bushel
/// unit (million bushels), GDP deflator normalized to 1 in the base year.
struct MarketSeries {
  std::vector<int> year;
  std::vector<double> harvest_price;
  std::vector<double> feb_futures;
  std::vector<double> implied_vol;
  std::vector<double> stocks;
  std::vector<double> national_production;
  std::vector<double> gdp_deflator;

  std::size_t size() const noexcept { return year.size(); }
  /// Position of `y` in the series, if present.
  std::optional<std::size_t> index_of(int y) const;
  /// Throws IngestError when an invariant (strictly increasing years, positive
  /// prices / IV / stocks / deflators, equal column lengths) is violated.
  void validate() const;
  /// Years missing between the first and last year.
  std::vector<int> gaps() const;
  MarketSeries slice(int first_year, int last_year) const;
};

struct YieldRecord {
  int year = 0;
  std::string state;
  std::string county;
  double yield = 0.0;  // bu/acre
};

/// County-level yield observations.
struct YieldPanel {
  std::vector<YieldRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  void validate() const;
  std::vector<std::string> states() const;
  YieldPanel filter_state(const std::string& state) const;
  /// Observation count per year.
  std::map<int, std::size_t> counts_by_year() const;
  std::map<std::string, std::size_t> counts_by_state() const;
};

/// Mean and sample sd (divisor n - 1) of one variable over a decade.
struct DecadeStat {
  int decade = 0;  // 1990, 2000, ...
  std::size_t count = 0;
  double mean = 0.0;
  double sd = 0.0;
};

/// Per-decade stocks and harvest price of the series, and yields of the panel
/// pooled over all records of each decade.
struct DecadeSummary {
  std::vector<DecadeStat> stocks;
  std::vector<DecadeStat> harvest_price;
  std::vector<DecadeStat> yield;
};

DecadeSummary decade_summary(const MarketSeries& series, const YieldPanel& yields);

/// CSV header: year,harvest_price,feb_futures,implied_vol,stocks,
/// national_production,gdp_deflator. When national_production is absent,
/// national_yield (bu/acre) times acreage (million acres) is used instead.
MarketSeries ingest_market(const std::filesystem::path& path);
/// CSV header: year,state,county,yield.
YieldPanel ingest_yields(const std::filesystem::path& path);

}  // namespace sqr
