#include "dbm/data.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>

#include "dbm/error.hpp"

namespace dbm {

namespace {

constexpr char kMagic[8] = {'D', 'B', 'M', 'D', 'A', 'T', 'A', '\0'};
constexpr char kCsvMagic[] = "DBMDATA";
constexpr std::uint32_t kFormatVersion = 1;

static_assert(std::endian::native == std::endian::little, "binary dataset format assumes little endian");

}  // namespace

std::vector<long> count_labels(const std::vector<int>& labels, int num_classes) {
  std::vector<long> counts(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    if (y < 0 || y >= num_classes) {
      throw Error(ErrorKind::IndexOutOfRange,
                  "label " + std::to_string(y) + " of sample " + std::to_string(i) + " out of range");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  return counts;
}

void LabeledDataset::validate() const {
  if (static_cast<Eigen::Index>(labels.size()) != features.rows()) {
    throw Error(ErrorKind::LengthMismatch, "feature rows and labels differ in length");
  }
  if (count_labels(labels, num_classes()) != class_counts) {
    throw Error(ErrorKind::CountMismatch, "class_counts disagree with labels");
  }
}

void GenConfig::validate() const {
  if (classes < 1) throw Error(ErrorKind::InvalidConfig, "classes must be >= 1");
  if (input_dim < 1) throw Error(ErrorKind::InvalidConfig, "input_dim must be >= 1");
  if (!(imbalance >= 1.0)) throw Error(ErrorKind::InvalidConfig, "imbalance factor must be >= 1");
  if (n_max < 1 || static_cast<double>(n_max) / imbalance < 1.0) {
    throw Error(ErrorKind::InvalidConfig, "n_max / imbalance must be >= 1");
  }
  if (!(intra_std >= 0.0) || !std::isfinite(intra_std)) {
    throw Error(ErrorKind::InvalidConfig, "intra_std must be finite and >= 0");
  }
  if (!(center_norm > 0.0)) throw Error(ErrorKind::InvalidConfig, "center_norm must be > 0");
  if (test_per_class < 1) throw Error(ErrorKind::InvalidConfig, "test_per_class must be >= 1");
}

std::vector<long> exponential_counts(long n_max, int classes, double rho) {
  if (classes < 1) throw Error(ErrorKind::InvalidConfig, "exponential profile needs at least one class");
  if (!(rho >= 1.0)) throw Error(ErrorKind::InvalidConfig, "imbalance factor must be >= 1");
  if (n_max < 1) throw Error(ErrorKind::InvalidConfig, "n_max must be >= 1");
  if (static_cast<double>(n_max) / rho < 1.0) throw Error(ErrorKind::InvalidConfig, "n_max / imbalance must be >= 1");
  if (classes == 1) return {n_max};
  std::vector<long> counts(static_cast<std::size_t>(classes));
  for (int i = 0; i < classes; ++i) {
    const double exact = static_cast<double>(n_max) * std::pow(rho, -static_cast<double>(i) / (classes - 1));
    counts[static_cast<std::size_t>(i)] = std::max(1L, std::lround(exact));
  }
  return counts;
}

Matrix sample_class_centers(int classes, int input_dim, double center_norm, std::uint64_t seed) {
  constexpr int kMaxAttempts = 1000;
  constexpr double kMaxCosine = 0.95;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Matrix directions(classes, input_dim);
  int attempts = 0;
  for (int c = 0; c < classes;) {
    if (attempts++ >= kMaxAttempts) {
      throw Error(ErrorKind::CenterSamplingFailed,
                  "could not place " + std::to_string(classes) + " centers in dimension " +
                      std::to_string(input_dim));
    }
    Vector v(input_dim);
    for (int d = 0; d < input_dim; ++d) v(d) = normal(rng);
    if (v.norm() < kMinNorm) continue;
    v.normalize();
    bool ok = true;
    for (int prev = 0; prev < c && ok; ++prev) ok = directions.row(prev).dot(v) < kMaxCosine;
    if (!ok) continue;
    directions.row(c++) = v.transpose();
  }
  return directions * center_norm;
}

namespace {

LabeledDataset draw_split(const Matrix& centers, const std::vector<long>& counts, double intra_std,
                          std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const long total = std::accumulate(counts.begin(), counts.end(), 0L);
  LabeledDataset ds;
  ds.features.resize(total, centers.cols());
  ds.labels.reserve(static_cast<std::size_t>(total));
  ds.class_counts = counts;
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    for (long k = 0; k < counts[c]; ++k, ++row) {
      for (Eigen::Index d = 0; d < centers.cols(); ++d) {
        ds.features(row, d) = centers(static_cast<Eigen::Index>(c), d) + intra_std * normal(rng);
      }
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

}  // namespace

DatasetSplit generate(const GenConfig& cfg) {
  cfg.validate();
  const Matrix centers = sample_class_centers(cfg.classes, cfg.input_dim, cfg.center_norm, cfg.seed);
  // Separate stream for samples so center resampling does not shift them.
  std::mt19937_64 rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL);
  DatasetSplit split;
  split.train = draw_split(centers, exponential_counts(cfg.n_max, cfg.classes, cfg.imbalance), cfg.intra_std, rng);
  split.test = draw_split(centers, std::vector<long>(static_cast<std::size_t>(cfg.classes), cfg.test_per_class),
                          cfg.intra_std, rng);
  const std::string tag = "synthetic(seed=" + std::to_string(cfg.seed) + ")";
  split.train.provenance = tag + "/train";
  split.test.provenance = tag + "/test";
  return split;
}

// ---------------------------------------------------------------------------
// Files

namespace {

template <typename T>
void write_raw(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void write_binary(const LabeledDataset& ds, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  write_raw(out, kFormatVersion);
  write_raw(out, static_cast<std::uint32_t>(ds.num_classes()));
  write_raw(out, static_cast<std::uint32_t>(ds.input_dim()));
  write_raw(out, static_cast<std::uint64_t>(ds.size()));
  for (long n : ds.class_counts) write_raw(out, static_cast<std::uint64_t>(n));
  for (Eigen::Index r = 0; r < ds.size(); ++r) {
    write_raw(out, static_cast<std::int32_t>(ds.labels[static_cast<std::size_t>(r)]));
    for (Eigen::Index d = 0; d < ds.input_dim(); ++d) write_raw(out, ds.features(r, d));
  }
}

void write_csv(const LabeledDataset& ds, std::ostream& out) {
  out << kCsvMagic << ',' << kFormatVersion << ",csv," << ds.num_classes() << ',' << ds.input_dim() << ','
      << ds.size() << '\n';
  out << "counts";
  for (long n : ds.class_counts) out << ',' << n;
  out << '\n';
  for (Eigen::Index r = 0; r < ds.size(); ++r) {
    out << ds.labels[static_cast<std::size_t>(r)];
    for (Eigen::Index d = 0; d < ds.input_dim(); ++d) out << ',' << format_double(ds.features(r, d));
    out << '\n';
  }
}

[[noreturn]] void parse_fail(const std::filesystem::path& path, const std::string& where, const std::string& what) {
  throw Error(ErrorKind::ParseError, path.string() + " (" + where + "): " + what);
}

class BinaryReader {
 public:
  BinaryReader(const std::string& bytes, const std::filesystem::path& path) : bytes_(bytes), path_(path) {}

  template <typename T>
  T read() {
    if (offset_ + sizeof(T) > bytes_.size()) {
      parse_fail(path_, "byte " + std::to_string(offset_), "unexpected end of file");
    }
    T value;
    std::memcpy(&value, bytes_.data() + offset_, sizeof(T));
    offset_ += sizeof(T);
    return value;
  }

  std::size_t offset() const { return offset_; }
  bool done() const { return offset_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  const std::filesystem::path& path_;
  std::size_t offset_ = sizeof(kMagic);
};

void check_declared_counts(const LabeledDataset& ds, const std::filesystem::path& path) {
  const std::vector<long> actual = count_labels(ds.labels, ds.num_classes());
  if (actual != ds.class_counts) {
    throw Error(ErrorKind::CountMismatch, path.string() + ": header class counts disagree with labels");
  }
}

LabeledDataset read_binary(const std::string& bytes, const std::filesystem::path& path) {
  BinaryReader in(bytes, path);
  const auto version = in.read<std::uint32_t>();
  if (version != kFormatVersion) parse_fail(path, "byte 8", "unsupported version " + std::to_string(version));
  const auto classes = in.read<std::uint32_t>();
  const auto dim = in.read<std::uint32_t>();
  const auto n = in.read<std::uint64_t>();
  if (classes == 0 || dim == 0) parse_fail(path, "byte 12", "class count and dimension must be positive");
  const std::size_t record = sizeof(std::int32_t) + sizeof(double) * dim;
  if (n > bytes.size() / record + 1) parse_fail(path, "byte 20", "sample count exceeds file size");

  LabeledDataset ds;
  ds.class_counts.resize(classes);
  for (auto& c : ds.class_counts) c = static_cast<long>(in.read<std::uint64_t>());
  ds.features.resize(static_cast<Eigen::Index>(n), dim);
  ds.labels.resize(n);
  for (std::uint64_t r = 0; r < n; ++r) {
    const std::size_t at = in.offset();
    const auto label = in.read<std::int32_t>();
    if (label < 0 || static_cast<std::uint32_t>(label) >= classes) {
      parse_fail(path, "byte " + std::to_string(at), "label " + std::to_string(label) + " out of range");
    }
    ds.labels[r] = label;
    for (std::uint32_t d = 0; d < dim; ++d) ds.features(static_cast<Eigen::Index>(r), d) = in.read<double>();
  }
  if (!in.done()) parse_fail(path, "byte " + std::to_string(in.offset()), "trailing bytes");
  check_declared_counts(ds, path);
  return ds;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? comma : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view field, const std::filesystem::path& path, std::size_t line_no) {
  T value{};
  const auto res = std::from_chars(field.data(), field.data() + field.size(), value);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    parse_fail(path, "line " + std::to_string(line_no), "bad number '" + std::string(field) + "'");
  }
  return value;
}

LabeledDataset read_csv(const std::string& text, const std::filesystem::path& path) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  next_line();
  const auto header = split_commas(line);
  if (header.size() != 6 || header[0] != kCsvMagic || header[2] != "csv") {
    parse_fail(path, "line 1", "bad header");
  }
  if (parse_number<std::uint32_t>(header[1], path, line_no) != kFormatVersion) {
    parse_fail(path, "line 1", "unsupported version");
  }
  const auto classes = parse_number<int>(header[3], path, line_no);
  const auto dim = parse_number<int>(header[4], path, line_no);
  const auto n = parse_number<long>(header[5], path, line_no);
  if (classes < 1 || dim < 1 || n < 0) parse_fail(path, "line 1", "non-positive shape");

  if (!next_line()) parse_fail(path, "line 2", "missing counts line");
  const auto counts = split_commas(line);
  if (counts.size() != static_cast<std::size_t>(classes) + 1 || counts[0] != "counts") {
    parse_fail(path, "line 2", "expected 'counts' followed by " + std::to_string(classes) + " values");
  }
  LabeledDataset ds;
  for (std::size_t i = 1; i < counts.size(); ++i) ds.class_counts.push_back(parse_number<long>(counts[i], path, line_no));

  ds.features.resize(n, dim);
  ds.labels.resize(static_cast<std::size_t>(n));
  for (long r = 0; r < n; ++r) {
    if (!next_line()) parse_fail(path, "line " + std::to_string(line_no + 1), "expected " + std::to_string(n) + " rows");
    const auto fields = split_commas(line);
    if (fields.size() != static_cast<std::size_t>(dim) + 1) {
      parse_fail(path, "line " + std::to_string(line_no), "expected " + std::to_string(dim + 1) + " fields");
    }
    const int label = parse_number<int>(fields[0], path, line_no);
    if (label < 0 || label >= classes) {
      parse_fail(path, "line " + std::to_string(line_no), "label " + std::to_string(label) + " out of range");
    }
    ds.labels[static_cast<std::size_t>(r)] = label;
    for (int d = 0; d < dim; ++d) ds.features(r, d) = parse_number<double>(fields[static_cast<std::size_t>(d) + 1], path, line_no);
  }
  while (next_line()) {
    if (!line.empty()) parse_fail(path, "line " + std::to_string(line_no), "trailing rows");
  }
  check_declared_counts(ds, path);
  return ds;
}

}  // namespace

void save_dataset(const LabeledDataset& ds, const std::filesystem::path& path, DatasetFormat format) {
  ds.validate();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open " + path.string() + " for writing");
  if (format == DatasetFormat::Binary) {
    write_binary(ds, out);
  } else {
    write_csv(ds, out);
  }
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.empty()) parse_fail(path, "byte 0", "empty file");

  LabeledDataset ds;
  if (bytes.size() >= sizeof(kMagic) && std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) == 0) {
    ds = read_binary(bytes, path);
  } else if (bytes.rfind(kCsvMagic, 0) == 0) {
    ds = read_csv(bytes, path);
  } else {
    parse_fail(path, "byte 0", "unrecognized magic");
  }
  ds.provenance = path.string();
  return ds;
}

}  // namespace dbm
