#include "posthoc/data/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "posthoc/core/error.hpp"
#include "posthoc/core/rng.hpp"

namespace posthoc::data {

const std::vector<Label>& Dataset::labels() const {
  require(y.has_value(), "dataset is unlabeled");
  return *y;
}

void Dataset::validate(std::size_t num_classes) const {
  require(x.rank() == 2, "dataset features must be a matrix");
  if (y) {
    require(y->size() == size(), "dataset label count does not match row count");
    nn::check_labels(*y, num_classes);
  }
}

Dataset subset(const Dataset& d, std::span<const std::size_t> rows) {
  Dataset out;
  out.x = ad::take_rows(d.x, rows);
  if (d.y) {
    std::vector<Label> y;
    y.reserve(rows.size());
    for (std::size_t r : rows) y.push_back((*d.y)[r]);
    out.y = std::move(y);
  }
  out.class_names = d.class_names;
  return out;
}

void SyntheticSpec::validate() const {
  require(std > 0.0, "synthetic std must be positive");
  require(box_hi > box_lo, "calibration box must have positive width");
}

namespace {

Dataset gaussian_pair(const SyntheticSpec& s, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  const std::size_t n = s.n_neg + s.n_pos;
  Dataset d;
  d.x = Tensor::matrix(n, 2);
  std::vector<Label> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = i >= s.n_neg;
    const auto& mean = pos ? s.pos_mean : s.neg_mean;
    d.x(i, 0) = mean[0] + s.std * z(rng);
    d.x(i, 1) = mean[1] + s.std * z(rng);
    y[i] = pos ? 1 : 0;
  }
  d.y = std::move(y);
  d.class_names = {"negative", "positive"};
  return d;
}

}  // namespace

SyntheticSplits gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticSplits out;
  out.train = gaussian_pair(spec, stream_seed(spec.seed, Stream::kTrainData));
  out.test = gaussian_pair(spec, stream_seed(spec.seed, Stream::kTestData));

  Rng rng(stream_seed(spec.seed, Stream::kCalibData));
  std::uniform_real_distribution<double> u(spec.box_lo, spec.box_hi);
  out.calib.x = Tensor::matrix(spec.calib_n, 2);
  for (std::size_t i = 0; i < spec.calib_n; ++i) {
    out.calib.x(i, 0) = u(rng);
    out.calib.x(i, 1) = u(rng);
  }
  out.calib.class_names = out.train.class_names;
  return out;
}

Dataset corrupt_labels(const Dataset& d, std::size_t num_classes, const CorruptionSpec& spec) {
  require(d.labeled(), "corrupt_labels: dataset is unlabeled");
  require(spec.rate >= 0.0 && spec.rate <= 1.0, "corruption rate must lie in [0, 1]");
  require(num_classes >= 1, "corrupt_labels: need at least one class");
  Dataset out = d;
  const std::size_t n = d.size();
  const auto k = static_cast<std::size_t>(std::floor(spec.rate * static_cast<double>(n)));
  if (k == 0) return out;

  Rng rng(spec.seed);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::uniform_int_distribution<std::size_t> cls(0, num_classes - 1);
  for (std::size_t i = 0; i < k; ++i) (*out.y)[idx[i]] = cls(rng);
  return out;
}

std::vector<Dataset> split(const Dataset& d, std::span<const double> fractions, std::uint64_t seed) {
  require(!fractions.empty(), "split: no fractions");
  double total = 0.0;
  for (double f : fractions) {
    require(f >= 0.0, "split: negative fraction");
    total += f;
  }
  require(std::abs(total - 1.0) < 1e-9, "split: fractions must sum to 1");

  const std::size_t n = d.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  std::vector<Dataset> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    std::size_t len = i + 1 == fractions.size()
                          ? n - start
                          : static_cast<std::size_t>(std::floor(fractions[i] * static_cast<double>(n) + 1e-9));
    len = std::min(len, n - start);
    parts.push_back(subset(d, std::span(idx).subspan(start, len)));
    start += len;
  }
  return parts;
}

// ---------------------------------------------------------------- CSV

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string(), "0", "cannot open file");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string(), "line 1", "missing header");

  const auto header = split_fields(line);
  std::size_t dim = 0;
  bool has_label = false;
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto name = trim(header[i]);
    if (name == "f" + std::to_string(i)) {
      if (has_label) throw ParseError(path.string(), "line 1", "feature column after label");
      ++dim;
    } else if (name == "label" && i + 1 == header.size()) {
      has_label = true;
    } else {
      throw ParseError(path.string(), "line 1", "unexpected header field '" + std::string(name) + "'");
    }
  }

  std::vector<double> values;
  std::vector<Label> labels;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    const std::size_t expect = dim + (has_label ? 1 : 0);
    if (fields.size() != expect) {
      throw ParseError(path.string(), "line " + std::to_string(lineno),
                       "expected " + std::to_string(expect) + " fields, got " + std::to_string(fields.size()));
    }
    for (std::size_t j = 0; j < dim; ++j) {
      const auto f = trim(fields[j]);
      double v = 0.0;
      const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || p != f.data() + f.size()) {
        throw ParseError(path.string(), "line " + std::to_string(lineno), "bad number '" + std::string(f) + "'");
      }
      values.push_back(v);
    }
    if (has_label) {
      const auto f = trim(fields[dim]);
      Label v = 0;
      const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (ec != std::errc() || p != f.data() + f.size()) {
        throw ParseError(path.string(), "line " + std::to_string(lineno), "bad label '" + std::string(f) + "'");
      }
      labels.push_back(v);
    }
  }

  Dataset d;
  const std::size_t n = dim ? values.size() / dim : 0;
  d.x = Tensor({n, dim}, std::move(values));
  if (has_label) d.y = std::move(labels);
  return d;
}

void save_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t j = 0; j < d.dim(); ++j) out << (j ? "," : "") << 'f' << j;
  if (d.y) out << (d.dim() ? "," : "") << "label";
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < d.dim(); ++j) {
      const auto res = std::to_chars(buf, buf + sizeof buf, d.x(i, j));
      out << (j ? "," : "") << std::string_view(buf, res.ptr - buf);
    }
    if (d.y) out << (d.dim() ? "," : "") << (*d.y)[i];
    out << '\n';
  }
}

// ---------------------------------------------------------------- IDX

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), "byte 0", "cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::filesystem::path& path) {
  if (off + 4 > b.size()) throw ParseError(path.string(), "byte " + std::to_string(off), "truncated header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels) {
  const auto img = read_all(images);
  const std::uint32_t magic = be32(img, 0, images);
  if (magic != 0x00000803) {
    std::ostringstream os;
    os << "expected image magic 0x00000803, got 0x" << std::hex << magic;
    throw ParseError(images.string(), "byte 0", os.str());
  }
  const std::size_t n = be32(img, 4, images);
  const std::size_t rows = be32(img, 8, images);
  const std::size_t cols = be32(img, 12, images);
  const std::size_t dim = rows * cols;
  if (img.size() != 16 + n * dim) {
    throw ParseError(images.string(), "byte " + std::to_string(img.size()),
                     "expected " + std::to_string(16 + n * dim) + " bytes");
  }
  Dataset d;
  d.x = Tensor::matrix(n, dim);
  for (std::size_t i = 0; i < n * dim; ++i) d.x[i] = static_cast<double>(img[16 + i]) / 255.0;

  if (labels) {
    const auto lab = read_all(*labels);
    const std::uint32_t lmagic = be32(lab, 0, *labels);
    if (lmagic != 0x00000801) throw ParseError(labels->string(), "byte 0", "expected label magic 0x00000801");
    const std::size_t ln = be32(lab, 4, *labels);
    if (ln != n) throw ParseError(labels->string(), "byte 4", "label count does not match image count");
    if (lab.size() != 8 + n) throw ParseError(labels->string(), "byte " + std::to_string(lab.size()), "truncated");
    std::vector<Label> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = lab[8 + i];
    d.y = std::move(y);
  }
  return d;
}

}  // namespace posthoc::data
