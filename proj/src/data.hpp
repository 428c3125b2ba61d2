#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace dcwp::data {

/// Binary spurious-feature environment. Training environments have bias
/// strength p in (0.5, 1]; the test environment is encoded as p = 0.5 with
/// phi = 0 (spurious features independent of the label). phi mixes in the
/// debiasing distribution that forces each spurious feature to -y.
struct BinaryEnvSpec {
  double p = 0.75;
  std::size_t spurious_dims = 15;
  double phi = 0.0;

  void validate() const;
};

/// Samples with target label, bias label and an aligned/conflicting flag.
/// `aligned[i]` is 1 iff the sample's bias label equals the attribute
/// statistically assigned to its class.
struct BiasedDataset {
  Tensor inputs;
  std::vector<int> labels;
  std::vector<int> bias_labels;
  std::vector<std::uint8_t> aligned;
  std::size_t classes = 0;
  std::size_t bias_values = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t aligned_count() const;
  std::size_t conflicting_count() const { return size() - aligned_count(); }
  void validate() const;
};

/// Draws n samples: y uniform on {-1,1} (stored as class 1/0), Z_inv = y,
/// and each Z_sp,i independently forced to -y with probability phi, else y
/// with probability p and -y otherwise. The bias label is the sign of the
/// spurious majority vote (ties count as conflicting).
BiasedDataset sample_binary_env(const BinaryEnvSpec& spec, std::size_t n, Rng& rng);

/// Mixture weight that removes the spurious correlation: 1 - 1/(2p).
double debias_weight(double p);

/// True iff the mixture stays biased, P(Z = -y | y) <= P(Z = y | y).
bool check_bias_condition(const BinaryEnvSpec& spec);

// ---------------------------------------------------------------------------
// IDX ingestion (big-endian; magic 0x00000803 for images, 0x00000801 labels)

struct IdxContent {
  Tensor values;  // images: (n, rows*cols) in [0,1]; labels: (n)
  bool is_labels = false;
  std::size_t image_rows = 0;
  std::size_t image_cols = 0;
};

IdxContent load_idx(const std::string& path);
void write_idx_images(const std::string& path, const Tensor& images, std::size_t rows,
                      std::size_t cols);
void write_idx_labels(const std::string& path, const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Colored digits

/// Ten maximally separated palette colors (pure plus secondary hues), one
/// assigned per digit class (class i -> palette[i]).
extern const std::array<std::array<double, 3>, 10> kColorPalette;

struct ColoredMnistSpec {
  double rho = 0.01;   // bias-conflicting fraction, in (0,1)
  bool test_mode = false;  // test: colors drawn uniformly over all 10
  void validate() const;
};

/// Exact conflicting-sample count for the canonical 55,000-sample split at
/// the four standard ratios; round(rho * n) otherwise.
std::size_t conflicting_count_for(std::size_t n, double rho);

/// Tints each grayscale digit multiplicatively with a palette color into a
/// 3x28x28 input (channel-major). Aligned samples use their class color;
/// conflicting samples a uniformly random different color.
BiasedDataset generate_colored_mnist(const Tensor& images, const std::vector<int>& labels,
                                     const ColoredMnistSpec& spec, Rng& rng);

/// Deterministic MNIST-format stand-in: renders digit glyphs with stroke
/// jitter, shift and per-pixel noise, and writes IDX image/label pairs.
void synthesize_digit_idx(const std::string& images_path, const std::string& labels_path,
                          std::size_t count, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Multiclass coded environment (desk-scale stand-in built like the binary
// environment: an invariant code block for the class plus a larger, cleaner
// spurious code block for the bias attribute)

struct SyntheticSpec {
  std::size_t classes = 4;
  std::size_t invariant_dims = 16;
  std::size_t spurious_dims = 64;
  double rho = 0.01;            // conflicting fraction (train mode)
  double invariant_noise = 0.25;  // per-coordinate sign-flip probability
  double spurious_noise = 0.02;
  bool test_mode = false;  // attribute uniform over classes, noise unchanged
  std::uint64_t codebook_seed = 911;

  void validate() const;
  std::size_t input_dim() const { return invariant_dims + spurious_dims; }
};

BiasedDataset generate_synthetic(const SyntheticSpec& spec, std::size_t n, Rng& rng);

// ---------------------------------------------------------------------------
// Dataset container: magic "DCWPDAT1" + LE u32 header length + JSON header +
// row-major LE f64 input blob + one byte per sample each for label, bias
// label and aligned flag.

void save_dataset(const BiasedDataset& ds, const std::string& path);
BiasedDataset load_dataset(const std::string& path);

}  // namespace dcwp::data
