#include "sqr_app/output.hpp"

#include <cstdio>
#include <sstream>
#include <unistd.h>

#include "sqr/error.hpp"
#include "sqr/number_format.hpp"
#include "sqr/random.hpp"

namespace sqr::app {

namespace fs = std::filesystem;

OutputStage::OutputStage(fs::path out_dir) : out_dir_(std::move(out_dir)) {
  std::error_code ec;
  fs::create_directories(out_dir_, ec);
  if (ec) throw IngestError("cannot create output directory " + out_dir_.string() + ": " + ec.message());
  staging_ = out_dir_ / (".staging-" + std::to_string(::getpid()));
  fs::remove_all(staging_, ec);
  fs::create_directories(staging_, ec);
  if (ec) throw IngestError("cannot create staging directory " + staging_.string() + ": " + ec.message());
}

OutputStage::~OutputStage() {
  std::error_code ec;
  fs::remove_all(staging_, ec);
}

fs::path OutputStage::file(const std::string& name) {
  files_.push_back(name);
  return staging_ / name;
}

void OutputStage::commit() {
  std::vector<std::string> moved;
  for (const auto& name : files_) {
    std::error_code ec;
    fs::rename(staging_ / name, out_dir_ / name, ec);
    if (ec) {
      // take back what was already moved so the directory holds no half run
      for (const auto& m : moved) fs::remove(out_dir_ / m, ec);
      throw IngestError("cannot move " + name + " into " + out_dir_.string() + ": " + ec.message());
    }
    moved.push_back(name);
  }
  committed_ = true;
}

Cell::Cell(double v) : text(format_double(v)) {}
Cell::Cell(int v) : text(std::to_string(v)) {}
Cell::Cell(long long v) : text(std::to_string(v)) {}
Cell::Cell(std::size_t v) : text(std::to_string(v)) {}
Cell::Cell(bool v) : text(v ? "true" : "false") {}
Cell::Cell(const char* v) : Cell(std::string(v)) {}
Cell::Cell(const std::string& v) {
  if (v.find_first_of(",\"\n") == std::string::npos) {
    text = v;
    return;
  }
  text = "\"";
  for (char c : v) {
    if (c == '"') text += '"';
    text += c;
  }
  text += '"';
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header)
    : out_(path, std::ios::binary), path_(path), columns_(header.size()) {
  if (!out_) throw IngestError("cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
  out_ << '\n';
}

void CsvWriter::row(const std::vector<Cell>& cells) {
  if (cells.size() != columns_) throw InvalidArgument("CsvWriter: row width differs from header in " + path_.string());
  for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i].text;
  out_ << '\n';
}

void CsvWriter::close() {
  out_.close();
  if (!out_) throw IngestError("failed writing " + path_.string());
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return hex64(fnv1a64(buf.str()));
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IngestError("failed writing " + path.string());
}

}  // namespace sqr::app
