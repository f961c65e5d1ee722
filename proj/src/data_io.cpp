#include "l4/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "l4/errors.hpp"

namespace l4 {

namespace {

class ByteReader {
 public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string file)
      : bytes_(bytes), file_(std::move(file)) {}

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }

  std::span<const std::uint8_t> take(std::size_t n, const char* field) {
    need(n, field);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t pos() const noexcept { return pos_; }
  std::size_t size() const noexcept { return bytes_.size(); }
  const std::string& file() const noexcept { return file_; }

 private:
  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(file_ + ": truncated in field '" + field + "' at byte offset " +
                           std::to_string(pos_) + ": expected " + std::to_string(pos_ + n) +
                           " bytes, got " + std::to_string(bytes_.size()),
                       field, pos_);
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::string file_;
  std::size_t pos_ = 0;
};

void check_magic(ByteReader& in, std::uint32_t expected) {
  const std::uint32_t magic = in.u32("magic");
  if (magic != expected) {
    char buf[96];
    std::snprintf(buf, sizeof buf, ": bad magic 0x%08X at byte offset 0 (expected 0x%08X)", magic,
                  expected);
    throw ParseError(in.file() + buf, "magic", 0);
  }
}

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path.string(), path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_double(std::string_view s, const char* field, std::size_t line) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError("metrics line " + std::to_string(line) + ": bad value for " + field, field,
                     line);
  }
  return v;
}

std::uint64_t parse_u64(std::string_view s, const char* field, std::size_t line) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError("metrics line " + std::to_string(line) + ": bad value for " + field, field,
                     line);
  }
  return v;
}

}  // namespace

void Dataset::validate() const {
  if (inputs.cols() != labels.size()) {
    throw ContractError("Dataset: input column count differs from label count");
  }
  if (num_classes < 2) throw ContractError("Dataset: need at least two classes");
  for (auto y : labels) {
    if (y >= num_classes) throw ContractError("Dataset: label out of range");
  }
  if (!all_finite(inputs.data())) throw ContractError("Dataset: non-finite input");
}

Dataset Dataset::head(std::size_t n) const {
  n = std::min(n, size());
  Dataset out;
  out.num_classes = num_classes;
  out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
  out.inputs = Matrix(feature_dim(), n);
  for (std::size_t r = 0; r < feature_dim(); ++r)
    for (std::size_t c = 0; c < n; ++c) out.inputs(r, c) = inputs(r, c);
  return out;
}

Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels) {
  ByteReader img(images, "images");
  check_magic(img, kIdxImagesMagic);
  const std::uint32_t n_images = img.u32("image count");
  const std::uint32_t rows = img.u32("rows");
  const std::uint32_t cols = img.u32("cols");
  if (rows == 0 || cols == 0) throw ParseError("images: zero image dimension", "rows", 8);
  const std::size_t features = std::size_t{rows} * cols;
  const auto pixels = img.take(std::size_t{n_images} * features, "pixels");
  if (img.pos() != img.size()) {
    throw ParseError("images: " + std::to_string(img.size() - img.pos()) +
                         " trailing bytes after pixel data",
                     "pixels", img.pos());
  }

  ByteReader lab(labels, "labels");
  check_magic(lab, kIdxLabelsMagic);
  const std::uint32_t n_labels = lab.u32("label count");
  if (n_labels != n_images) {
    throw ParseError("labels: count mismatch (images " + std::to_string(n_images) + ", labels " +
                         std::to_string(n_labels) + ")",
                     "label count", 4);
  }
  const auto raw_labels = lab.take(n_labels, "labels");
  if (lab.pos() != lab.size()) {
    throw ParseError("labels: trailing bytes after label data", "labels", lab.pos());
  }

  Dataset ds;
  ds.num_classes = 10;
  ds.labels.resize(n_labels);
  for (std::size_t i = 0; i < n_labels; ++i) {
    if (raw_labels[i] >= ds.num_classes) {
      throw ParseError("labels: value " + std::to_string(raw_labels[i]) + " out of range",
                       "labels", 8 + i);
    }
    ds.labels[i] = raw_labels[i];
  }
  ds.inputs = Matrix(features, n_images);
  for (std::size_t s = 0; s < n_images; ++s)
    for (std::size_t f = 0; f < features; ++f)
      ds.inputs(f, s) = static_cast<double>(pixels[s * features + f]) / 255.0;
  return ds;
}

Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path) {
  const auto images = slurp(images_path);
  const auto labels = slurp(labels_path);
  return parse_idx(images, labels);
}

Dataset synthetic_classification(Seed seed, std::size_t n, std::size_t dim, std::size_t classes) {
  if (classes < 2) throw ContractError("synthetic_classification: need classes >= 2");
  if (n == 0 || dim == 0) throw ContractError("synthetic_classification: n and dim must be >= 1");
  constexpr double kNoiseStd = 0.3;

  Matrix means = gaussian_sample(dim, classes, seed.derive(1));
  for (std::size_t c = 0; c < classes; ++c) {
    double norm = 0.0;
    for (std::size_t i = 0; i < dim; ++i) norm += means(i, c) * means(i, c);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < dim; ++i) means(i, c) /= norm;
  }

  const Matrix noise = gaussian_sample(dim, n, seed.derive(2));
  Dataset ds;
  ds.num_classes = classes;
  ds.labels.resize(n);
  ds.inputs = Matrix(dim, n);
  for (std::size_t s = 0; s < n; ++s) {
    const auto c = static_cast<std::uint32_t>(s % classes);
    ds.labels[s] = c;
    for (std::size_t i = 0; i < dim; ++i) ds.inputs(i, s) = means(i, c) + kNoiseStd * noise(i, s);
  }
  return ds;
}

std::string format_metrics(std::span<const MetricsRow> rows) {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const auto& r : rows) {
    if (r.run_id.find_first_of(",\n\"") != std::string::npos) {
      throw ContractError("format_metrics: run_id must not contain ',', '\"' or newlines");
    }
    out += r.run_id;
    out += ',' + std::to_string(r.step);
    out += ',' + std::to_string(r.epoch);
    out += ',' + format_double(r.batch_loss);
    out += ',';
    if (r.effective_lr) out += format_double(*r.effective_lr);
    out += ',';
    if (r.lmin) out += format_double(*r.lmin);
    out += ',' + format_double(r.wallclock_ms);
    out += '\n';
  }
  return out;
}

std::vector<MetricsRow> parse_metrics(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw ParseError("metrics: missing or unexpected header", "header", 0);
  }
  std::vector<MetricsRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    for (;;) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (cells.size() != 7) {
      throw ParseError("metrics line " + std::to_string(lineno) + ": expected 7 columns",
                       "row", lineno);
    }
    MetricsRow r;
    r.run_id = std::string(cells[0]);
    r.step = parse_u64(cells[1], "step", lineno);
    r.epoch = parse_u64(cells[2], "epoch", lineno);
    r.batch_loss = parse_double(cells[3], "batch_loss", lineno);
    if (!cells[4].empty()) r.effective_lr = parse_double(cells[4], "effective_lr", lineno);
    if (!cells[5].empty()) r.lmin = parse_double(cells[5], "lmin", lineno);
    r.wallclock_ms = parse_double(cells[6], "wallclock_ms", lineno);
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing", path.string());
  f << text;
  f.flush();
  if (!f) throw IoError("write failed for " + path.string(), path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  return {bytes.begin(), bytes.end()};
}

void write_metrics(std::span<const MetricsRow> rows, const std::filesystem::path& path) {
  write_text_file(path, format_metrics(rows));
}

std::vector<MetricsRow> read_metrics(const std::filesystem::path& path) {
  return parse_metrics(read_text_file(path));
}

}  // namespace l4
