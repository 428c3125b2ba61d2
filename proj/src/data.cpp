#include "data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"

namespace dcwp::data {

void BinaryEnvSpec::validate() const {
  require(phi >= 0.0 && phi <= 1.0, ErrorCode::invalid_argument,
          "binary env: phi must lie in [0,1]");
  bool train_env = p > 0.5 && p <= 1.0;
  bool test_env = p == 0.5 && phi == 0.0;
  require(train_env || test_env, ErrorCode::invalid_argument,
          "binary env: p must lie in (0.5,1], or p = 0.5 with phi = 0 for the test environment");
  require(spurious_dims >= 1, ErrorCode::invalid_argument, "binary env: need at least 1 spurious dim");
}

std::size_t BiasedDataset::aligned_count() const {
  std::size_t c = 0;
  for (std::uint8_t a : aligned) c += a;
  return c;
}

void BiasedDataset::validate() const {
  require(inputs.rank() == 2 && inputs.rows() == labels.size(), ErrorCode::shape_mismatch,
          "dataset: inputs " + inputs.shape_str() + " vs " + std::to_string(labels.size()) +
              " labels");
  require(bias_labels.size() == labels.size() && aligned.size() == labels.size(),
          ErrorCode::shape_mismatch, "dataset: per-sample arrays out of sync");
  int class_limit = static_cast<int>(classes);
  for (int y : labels)
    if (y < 0 || y >= class_limit) fail(ErrorCode::invalid_argument, "dataset: label out of range");
  int bias_limit = static_cast<int>(bias_values);
  for (int b : bias_labels)
    if (b < 0 || b >= bias_limit)
      fail(ErrorCode::invalid_argument, "dataset: bias label out of range");
}

BiasedDataset sample_binary_env(const BinaryEnvSpec& spec, std::size_t n, Rng& rng) {
  spec.validate();
  require(n >= 1, ErrorCode::invalid_argument, "sample_binary_env: n must be >= 1");
  std::size_t d = spec.spurious_dims;
  BiasedDataset ds;
  ds.classes = 2;
  ds.bias_values = 2;
  ds.inputs = Tensor({n, d + 1});
  ds.labels.resize(n);
  ds.bias_labels.resize(n);
  ds.aligned.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    double y = bernoulli(rng, 0.5) ? 1.0 : -1.0;
    ds.inputs.at(s, 0) = y;  // invariant feature equals the label
    int majority = 0;
    for (std::size_t i = 0; i < d; ++i) {
      // one uniform per coordinate: [0,phi) -> forced -y,
      // [phi, phi+(1-phi)p) -> y, rest -> -y
      double u = uniform01(rng);
      double z;
      if (u < spec.phi) z = -y;
      else if (u < spec.phi + (1.0 - spec.phi) * spec.p) z = y;
      else z = -y;
      ds.inputs.at(s, 1 + i) = z;
      majority += z == y ? 1 : -1;
    }
    int label = y > 0 ? 1 : 0;
    int bias = majority > 0 ? label : 1 - label;  // ties count as conflicting
    ds.labels[s] = label;
    ds.bias_labels[s] = bias;
    ds.aligned[s] = bias == label ? 1 : 0;
  }
  return ds;
}

double debias_weight(double p) {
  require(p > 0.5 && p <= 1.0, ErrorCode::domain, "debias_weight: p must lie in (0.5,1]");
  return 1.0 - 1.0 / (2.0 * p);
}

bool check_bias_condition(const BinaryEnvSpec& spec) {
  spec.validate();
  double p_opposite = spec.phi + (1.0 - spec.phi) * (1.0 - spec.p);
  double p_same = (1.0 - spec.phi) * spec.p;
  return p_opposite <= p_same;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset,
                        const std::string& path) {
  require(offset + 4 <= buf.size(), ErrorCode::format,
          "idx: " + path + " truncated at byte offset " + std::to_string(offset));
  return (static_cast<std::uint32_t>(buf[offset]) << 24) |
         (static_cast<std::uint32_t>(buf[offset + 1]) << 16) |
         (static_cast<std::uint32_t>(buf[offset + 2]) << 8) |
         static_cast<std::uint32_t>(buf[offset + 3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::vector<unsigned char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "idx: cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

IdxContent load_idx(const std::string& path) {
  std::vector<unsigned char> buf = read_file(path);
  std::uint32_t magic = read_be32(buf, 0, path);
  IdxContent out;
  if (magic == 0x00000801u) {
    std::uint32_t count = read_be32(buf, 4, path);
    require(buf.size() == 8 + count, ErrorCode::format,
            "idx: " + path + " label payload is " + std::to_string(buf.size() - 8) +
                " bytes at offset 8, expected " + std::to_string(count));
    out.is_labels = true;
    out.values = Tensor({count});
    for (std::uint32_t i = 0; i < count; ++i) out.values[i] = buf[8 + i];
    return out;
  }
  if (magic == 0x00000803u) {
    std::uint32_t count = read_be32(buf, 4, path);
    std::uint32_t rows = read_be32(buf, 8, path);
    std::uint32_t cols = read_be32(buf, 12, path);
    std::size_t expected = static_cast<std::size_t>(count) * rows * cols;
    require(buf.size() == 16 + expected, ErrorCode::format,
            "idx: " + path + " image payload is " + std::to_string(buf.size() - 16) +
                " bytes at offset 16, expected " + std::to_string(expected));
    out.is_labels = false;
    out.image_rows = rows;
    out.image_cols = cols;
    out.values = Tensor({count, static_cast<std::size_t>(rows) * cols});
    for (std::size_t i = 0; i < expected; ++i)
      out.values[i] = static_cast<double>(buf[16 + i]) / 255.0;
    return out;
  }
  fail(ErrorCode::format, "idx: " + path + " has bad magic at byte offset 0 (got " +
                              std::to_string(magic) + ")");
}

void write_idx_images(const std::string& path, const Tensor& images, std::size_t rows,
                      std::size_t cols) {
  require(images.rank() == 2 && images.cols() == rows * cols, ErrorCode::shape_mismatch,
          "write_idx_images: images " + images.shape_str());
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "idx: cannot open " + path + " for writing");
  write_be32(out, 0x00000803u);
  write_be32(out, static_cast<std::uint32_t>(images.rows()));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  for (std::size_t i = 0; i < images.numel(); ++i) {
    double v = std::min(1.0, std::max(0.0, images[i]));
    unsigned char byte = static_cast<unsigned char>(std::lround(v * 255.0));
    out.write(reinterpret_cast<const char*>(&byte), 1);
  }
  require(out.good(), ErrorCode::io, "idx: write failed for " + path);
}

void write_idx_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "idx: cannot open " + path + " for writing");
  write_be32(out, 0x00000801u);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    require(l >= 0 && l <= 255, ErrorCode::invalid_argument, "idx: label out of byte range");
    unsigned char byte = static_cast<unsigned char>(l);
    out.write(reinterpret_cast<const char*>(&byte), 1);
  }
  require(out.good(), ErrorCode::io, "idx: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Colored digits

const std::array<std::array<double, 3>, 10> kColorPalette = {{
    {1.0, 0.0, 0.0},  // red
    {0.0, 1.0, 0.0},  // green
    {0.0, 0.0, 1.0},  // blue
    {1.0, 1.0, 0.0},  // yellow
    {1.0, 0.0, 1.0},  // magenta
    {0.0, 1.0, 1.0},  // cyan
    {1.0, 0.5, 0.0},  // orange
    {0.5, 1.0, 0.0},  // chartreuse
    {0.5, 0.0, 1.0},  // violet
    {1.0, 1.0, 1.0},  // white
}};

void ColoredMnistSpec::validate() const {
  require(rho > 0.0 && rho < 1.0, ErrorCode::invalid_argument,
          "colored mnist: rho must lie in (0,1)");
}

std::size_t conflicting_count_for(std::size_t n, double rho) {
  // Canonical group sizes of the 55,000-sample split at the standard ratios.
  if (n == 55000) {
    if (std::fabs(rho - 0.005) < 1e-12) return 249;
    if (std::fabs(rho - 0.01) < 1e-12) return 491;
    if (std::fabs(rho - 0.02) < 1e-12) return 986;
    if (std::fabs(rho - 0.05) < 1e-12) return 2449;
  }
  return static_cast<std::size_t>(std::lround(rho * static_cast<double>(n)));
}

BiasedDataset generate_colored_mnist(const Tensor& images, const std::vector<int>& labels,
                                     const ColoredMnistSpec& spec, Rng& rng) {
  spec.validate();
  std::size_t n = labels.size();
  require(images.rank() == 2 && images.rows() == n, ErrorCode::shape_mismatch,
          "colored mnist: images " + images.shape_str() + " vs " + std::to_string(n) + " labels");
  std::size_t pixels = images.cols();
  for (int y : labels)
    if (y < 0 || y >= 10)
      fail(ErrorCode::invalid_argument, "colored mnist: digit label out of range");

  // Pick colors first so the draw order is independent of the image payload.
  std::vector<int> color(n);
  std::vector<std::uint8_t> is_aligned(n, 1);
  if (spec.test_mode) {
    for (std::size_t s = 0; s < n; ++s) {
      color[s] = static_cast<int>(uniform_index(rng, 10));
      is_aligned[s] = color[s] == labels[s] ? 1 : 0;
    }
  } else {
    std::size_t k = conflicting_count_for(n, spec.rho);
    require(k < n, ErrorCode::invalid_argument, "colored mnist: conflicting count exceeds split");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t j = i + uniform_index(rng, n - i);
      std::swap(order[i], order[j]);
    }
    for (std::size_t s = 0; s < n; ++s) color[s] = labels[s];
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t s = order[i];
      int other = static_cast<int>(uniform_index(rng, 9));
      if (other >= labels[s]) ++other;  // uniform over the 9 non-assigned colors
      color[s] = other;
      is_aligned[s] = 0;
    }
  }

  BiasedDataset ds;
  ds.classes = 10;
  ds.bias_values = 10;
  ds.labels = labels;
  ds.bias_labels = color;
  ds.aligned = std::move(is_aligned);
  ds.inputs = Tensor({n, 3 * pixels});
  for (std::size_t s = 0; s < n; ++s) {
    const auto& rgb = kColorPalette[static_cast<std::size_t>(color[s])];
    for (std::size_t ch = 0; ch < 3; ++ch) {
      double scale = rgb[ch];
      for (std::size_t p = 0; p < pixels; ++p)
        ds.inputs.at(s, ch * pixels + p) = images.at(s, p) * scale;
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Digit glyph synthesizer (seven-segment layout with jitter)

namespace {

// segment bit order: top, top-left, top-right, middle, bottom-left,
// bottom-right, bottom
constexpr unsigned char kSegments[10] = {
    0b1110111,  // 0
    0b0010010,  // 1
    0b1011101,  // 2
    0b1011011,  // 3
    0b0111010,  // 4
    0b1101011,  // 5
    0b1101111,  // 6
    0b1010010,  // 7
    0b1111111,  // 8
    0b1111011,  // 9
};

void splat(std::vector<double>& canvas, double cx, double cy, double radius, double intensity) {
  int lo_r = std::max(0, static_cast<int>(std::floor(cy - radius - 1)));
  int hi_r = std::min(27, static_cast<int>(std::ceil(cy + radius + 1)));
  int lo_c = std::max(0, static_cast<int>(std::floor(cx - radius - 1)));
  int hi_c = std::min(27, static_cast<int>(std::ceil(cx + radius + 1)));
  for (int r = lo_r; r <= hi_r; ++r)
    for (int c = lo_c; c <= hi_c; ++c) {
      double dist = std::hypot(c - cx, r - cy);
      double v = intensity * std::max(0.0, 1.0 - dist / (radius + 0.5));
      double& px = canvas[static_cast<std::size_t>(r) * 28 + static_cast<std::size_t>(c)];
      px = std::max(px, v);
    }
}

void draw_line(std::vector<double>& canvas, double x0, double y0, double x1, double y1,
               double radius, double intensity) {
  double len = std::hypot(x1 - x0, y1 - y0);
  int steps = std::max(2, static_cast<int>(std::ceil(len * 3)));
  for (int i = 0; i <= steps; ++i) {
    double t = static_cast<double>(i) / steps;
    splat(canvas, x0 + t * (x1 - x0), y0 + t * (y1 - y0), radius, intensity);
  }
}

}  // namespace

void synthesize_digit_idx(const std::string& images_path, const std::string& labels_path,
                          std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  Tensor images({count, 784});
  std::vector<int> labels(count);
  for (std::size_t s = 0; s < count; ++s) {
    int digit = static_cast<int>(uniform_index(rng, 10));
    labels[s] = digit;
    // jittered glyph box
    double cx = 14.0 + uniform(rng, -2.0, 2.0);
    double cy = 14.0 + uniform(rng, -2.0, 2.0);
    double w = 8.0 * uniform(rng, 0.85, 1.15);
    double h = 16.0 * uniform(rng, 0.85, 1.15);
    double slant = uniform(rng, -0.15, 0.15);
    double radius = uniform(rng, 1.0, 1.8);
    double ink = uniform(rng, 0.75, 1.0);

    double left = cx - w / 2, right = cx + w / 2;
    double top = cy - h / 2, mid = cy, bottom = cy + h / 2;
    auto sx = [&](double x, double y) { return x + slant * (cy - y); };

    std::vector<double> canvas(784, 0.0);
    unsigned char segs = kSegments[digit];
    if (segs & 0b1000000) draw_line(canvas, sx(left, top), top, sx(right, top), top, radius, ink);
    if (segs & 0b0100000) draw_line(canvas, sx(left, top), top, sx(left, mid), mid, radius, ink);
    if (segs & 0b0010000) draw_line(canvas, sx(right, top), top, sx(right, mid), mid, radius, ink);
    if (segs & 0b0001000) draw_line(canvas, sx(left, mid), mid, sx(right, mid), mid, radius, ink);
    if (segs & 0b0000100)
      draw_line(canvas, sx(left, mid), mid, sx(left, bottom), bottom, radius, ink);
    if (segs & 0b0000010)
      draw_line(canvas, sx(right, mid), mid, sx(right, bottom), bottom, radius, ink);
    if (segs & 0b0000001)
      draw_line(canvas, sx(left, bottom), bottom, sx(right, bottom), bottom, radius, ink);

    for (std::size_t p = 0; p < 784; ++p) {
      double noisy = canvas[p] + 0.04 * normal01(rng);
      images.at(s, p) = std::min(1.0, std::max(0.0, noisy));
    }
  }
  write_idx_images(images_path, images, 28, 28);
  write_idx_labels(labels_path, labels);
}

// ---------------------------------------------------------------------------
// Multiclass coded environment

void SyntheticSpec::validate() const {
  require(classes >= 2, ErrorCode::invalid_argument, "synthetic: need at least 2 classes");
  require(invariant_dims >= 1 && spurious_dims >= 1, ErrorCode::invalid_argument,
          "synthetic: dims must be >= 1");
  require(rho > 0.0 && rho < 1.0, ErrorCode::invalid_argument, "synthetic: rho must lie in (0,1)");
  require(invariant_noise >= 0.0 && invariant_noise < 0.5, ErrorCode::invalid_argument,
          "synthetic: invariant noise must lie in [0, 0.5)");
  require(spurious_noise >= 0.0 && spurious_noise < 0.5, ErrorCode::invalid_argument,
          "synthetic: spurious noise must lie in [0, 0.5)");
}

BiasedDataset generate_synthetic(const SyntheticSpec& spec, std::size_t n, Rng& rng) {
  spec.validate();
  require(n >= 1, ErrorCode::invalid_argument, "synthetic: n must be >= 1");

  // class/attribute codewords are a pure function of the codebook seed, so
  // train and test splits share them
  Rng codebook(spec.codebook_seed);
  std::vector<std::vector<double>> inv_code(spec.classes), sp_code(spec.classes);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    inv_code[c].resize(spec.invariant_dims);
    for (double& v : inv_code[c]) v = bernoulli(codebook, 0.5) ? 1.0 : -1.0;
    sp_code[c].resize(spec.spurious_dims);
    for (double& v : sp_code[c]) v = bernoulli(codebook, 0.5) ? 1.0 : -1.0;
  }

  BiasedDataset ds;
  ds.classes = spec.classes;
  ds.bias_values = spec.classes;
  ds.inputs = Tensor({n, spec.input_dim()});
  ds.labels.resize(n);
  ds.bias_labels.resize(n);
  ds.aligned.resize(n);
  for (std::size_t s = 0; s < n; ++s) {
    int y = static_cast<int>(uniform_index(rng, spec.classes));
    int attr;
    if (spec.test_mode) {
      attr = static_cast<int>(uniform_index(rng, spec.classes));
    } else if (bernoulli(rng, spec.rho)) {
      attr = static_cast<int>(uniform_index(rng, spec.classes - 1));
      if (attr >= y) ++attr;
    } else {
      attr = y;
    }
    ds.labels[s] = y;
    ds.bias_labels[s] = attr;
    ds.aligned[s] = attr == y ? 1 : 0;
    for (std::size_t i = 0; i < spec.invariant_dims; ++i) {
      double v = inv_code[static_cast<std::size_t>(y)][i];
      if (bernoulli(rng, spec.invariant_noise)) v = -v;
      ds.inputs.at(s, i) = v;
    }
    for (std::size_t i = 0; i < spec.spurious_dims; ++i) {
      double v = sp_code[static_cast<std::size_t>(attr)][i];
      if (bernoulli(rng, spec.spurious_noise)) v = -v;
      ds.inputs.at(s, spec.invariant_dims + i) = v;
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Container

namespace {
constexpr char kDatasetMagic[8] = {'D', 'C', 'W', 'P', 'D', 'A', 'T', '1'};
}

void save_dataset(const BiasedDataset& ds, const std::string& path) {
  ds.validate();
  nlohmann::json header;
  header["rows"] = ds.inputs.rows();
  header["cols"] = ds.inputs.cols();
  header["classes"] = ds.classes;
  header["bias_values"] = ds.bias_values;
  header["aligned_count"] = ds.aligned_count();
  header["conflicting_count"] = ds.conflicting_count();
  std::string head = header.dump();

  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::io, "dataset: cannot open " + path + " for writing");
  out.write(kDatasetMagic, 8);
  std::uint32_t len = static_cast<std::uint32_t>(head.size());
  unsigned char len_le[4] = {static_cast<unsigned char>(len & 0xff),
                             static_cast<unsigned char>((len >> 8) & 0xff),
                             static_cast<unsigned char>((len >> 16) & 0xff),
                             static_cast<unsigned char>((len >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(len_le), 4);
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(reinterpret_cast<const char*>(ds.inputs.data()),
            static_cast<std::streamsize>(ds.inputs.numel() * sizeof(double)));
  for (std::size_t s = 0; s < ds.size(); ++s) {
    unsigned char b = static_cast<unsigned char>(ds.labels[s]);
    out.write(reinterpret_cast<const char*>(&b), 1);
  }
  for (std::size_t s = 0; s < ds.size(); ++s) {
    unsigned char b = static_cast<unsigned char>(ds.bias_labels[s]);
    out.write(reinterpret_cast<const char*>(&b), 1);
  }
  out.write(reinterpret_cast<const char*>(ds.aligned.data()),
            static_cast<std::streamsize>(ds.aligned.size()));
  require(out.good(), ErrorCode::io, "dataset: write failed for " + path);
}

BiasedDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::io, "dataset: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  require(in.good() && std::memcmp(magic, kDatasetMagic, 8) == 0, ErrorCode::format,
          "dataset: bad magic in " + path);
  unsigned char len_le[4];
  in.read(reinterpret_cast<char*>(len_le), 4);
  require(in.good(), ErrorCode::format, "dataset: truncated header length in " + path);
  std::uint32_t len = static_cast<std::uint32_t>(len_le[0]) |
                      (static_cast<std::uint32_t>(len_le[1]) << 8) |
                      (static_cast<std::uint32_t>(len_le[2]) << 16) |
                      (static_cast<std::uint32_t>(len_le[3]) << 24);
  std::string head(len, '\0');
  in.read(head.data(), len);
  require(in.good(), ErrorCode::format, "dataset: truncated header in " + path);
  nlohmann::json header = nlohmann::json::parse(head, nullptr, false);
  require(!header.is_discarded(), ErrorCode::format, "dataset: invalid header JSON in " + path);

  std::size_t rows = header.at("rows").get<std::size_t>();
  std::size_t cols = header.at("cols").get<std::size_t>();
  BiasedDataset ds;
  ds.classes = header.at("classes").get<std::size_t>();
  ds.bias_values = header.at("bias_values").get<std::size_t>();
  ds.inputs = Tensor({rows, cols});
  in.read(reinterpret_cast<char*>(ds.inputs.data()),
          static_cast<std::streamsize>(ds.inputs.numel() * sizeof(double)));
  require(in.good(), ErrorCode::format, "dataset: truncated input blob in " + path);
  auto read_bytes = [&](std::vector<int>& target) {
    target.resize(rows);
    for (std::size_t s = 0; s < rows; ++s) {
      unsigned char b = 0;
      in.read(reinterpret_cast<char*>(&b), 1);
      target[s] = b;
    }
  };
  read_bytes(ds.labels);
  read_bytes(ds.bias_labels);
  ds.aligned.resize(rows);
  in.read(reinterpret_cast<char*>(ds.aligned.data()), static_cast<std::streamsize>(rows));
  require(in.good(), ErrorCode::format, "dataset: truncated per-sample arrays in " + path);
  ds.validate();
  return ds;
}

}  // namespace dcwp::data
