#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vendor_json.hpp"

namespace sqr::app {

/// Files are written into a hidden staging directory inside the output
/// directory and moved into place by commit(). Anything staged is removed if
/// the stage is destroyed before commit, so failed runs leave no partial
/// outputs behind.
class OutputStage {
 public:
  explicit OutputStage(std::filesystem::path out_dir);
  ~OutputStage();
  OutputStage(const OutputStage&) = delete;
  OutputStage& operator=(const OutputStage&) = delete;

  /// Staging path for an output file name.
  std::filesystem::path file(const std::string& name);
  const std::vector<std::string>& files() const noexcept { return files_; }
  const std::filesystem::path& directory() const noexcept { return out_dir_; }
  void commit();

 private:
  std::filesystem::path out_dir_;
  std::filesystem::path staging_;
  std::vector<std::string> files_;
  bool committed_ = false;
};

/// One CSV cell; numbers use the shortest round-trip format.
struct Cell {
  std::string text;
  Cell(double v);  // NOLINT(google-explicit-constructor)
  Cell(int v);     // NOLINT(google-explicit-constructor)
  Cell(long long v);
  Cell(std::size_t v);
  Cell(bool v);
  Cell(const std::string& v);  // NOLINT(google-explicit-constructor)
  Cell(const char* v);         // NOLINT(google-explicit-constructor)
};

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<Cell>& cells);
  void close();

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  std::size_t columns_;
};

std::string hex64(std::uint64_t v);
/// FNV-1a hash of a file's bytes.
std::string file_hash(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j);

}  // namespace sqr::app
