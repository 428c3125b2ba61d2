#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "data.hpp"
#include "test_util.hpp"

using namespace dcwp;
using namespace dcwp::data;

TEST_SUITE_BEGIN("biased_data");

TEST_CASE("binary env degenerate and test environments") {
  Rng rng(1);
  BinaryEnvSpec fully_biased{1.0, 4, 0.0};
  BiasedDataset ds = sample_binary_env(fully_biased, 500, rng);
  for (std::size_t s = 0; s < ds.size(); ++s) {
    double y = ds.inputs.at(s, 0);
    for (std::size_t i = 1; i <= 4; ++i) CHECK(ds.inputs.at(s, i) == y);
    CHECK(ds.aligned[s] == 1);
  }

  // test environment: spurious features uncorrelated with the label
  BinaryEnvSpec test_env{0.5, 3, 0.0};
  std::size_t n = 40000;
  BiasedDataset t = sample_binary_env(test_env, n, rng);
  for (std::size_t i = 1; i <= 3; ++i) {
    double corr = 0.0;
    for (std::size_t s = 0; s < n; ++s) corr += t.inputs.at(s, i) * t.inputs.at(s, 0);
    corr /= static_cast<double>(n);
    CHECK(std::fabs(corr) < 3.0 / std::sqrt(static_cast<double>(n)));
  }
}

TEST_CASE("mixture at phi = 1 - 1/(2p) is perfectly debiased") {
  Rng rng(2);
  BinaryEnvSpec spec{0.75, 3, 1.0 / 3.0};
  std::size_t n = 100000;
  BiasedDataset ds = sample_binary_env(spec, n, rng);
  std::size_t same = 0, total = 0;
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t i = 1; i <= 3; ++i) {
      same += ds.inputs.at(s, i) == ds.inputs.at(s, 0) ? 1 : 0;
      ++total;
    }
  double freq = static_cast<double>(same) / static_cast<double>(total);
  CHECK(std::fabs(freq - 0.5) < 0.01);
}

TEST_CASE("mixture marginal matches (1-phi) p within 3 binomial standard errors") {
  Rng rng(3);
  for (auto [p, phi] : {std::pair{0.9, 0.2}, std::pair{0.75, 0.0}, std::pair{0.6, 0.3}}) {
    BinaryEnvSpec spec{p, 5, phi};
    std::size_t n = 20000;
    BiasedDataset ds = sample_binary_env(spec, n, rng);
    double want = (1.0 - phi) * p;
    std::size_t same = 0, total = 0;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t i = 1; i <= 5; ++i) {
        same += ds.inputs.at(s, i) == ds.inputs.at(s, 0) ? 1 : 0;
        ++total;
      }
    double freq = static_cast<double>(same) / static_cast<double>(total);
    double se = std::sqrt(want * (1.0 - want) / static_cast<double>(total));
    CHECK(std::fabs(freq - want) < 3.0 * se + 1e-9);
  }
}

TEST_CASE("binary env determinism and validation") {
  BinaryEnvSpec spec{0.8, 6, 0.1};
  Rng r1(77), r2(77);
  BiasedDataset a = sample_binary_env(spec, 300, r1);
  BiasedDataset b = sample_binary_env(spec, 300, r2);
  for (std::size_t i = 0; i < a.inputs.numel(); ++i) CHECK(a.inputs[i] == b.inputs[i]);
  CHECK(a.labels == b.labels);
  CHECK(a.bias_labels == b.bias_labels);

  Rng rng(5);
  BinaryEnvSpec bad_phi{0.8, 3, 1.5};
  CHECK_THROWS_AS(sample_binary_env(bad_phi, 10, rng), Error);
  BinaryEnvSpec bad_p{0.4, 3, 0.0};
  CHECK_THROWS_AS(sample_binary_env(bad_p, 10, rng), Error);
}

TEST_CASE("debias weight") {
  CHECK(debias_weight(0.75) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(debias_weight(1.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(debias_weight(0.5000001) == doctest::Approx(0.0).epsilon(1e-4));
  CHECK_THROWS_AS(debias_weight(0.5), Error);
  CHECK_THROWS_AS(debias_weight(0.3), Error);
}

TEST_CASE("bias condition") {
  CHECK(check_bias_condition({0.75, 3, 1.0 / 3.0}));   // boundary
  CHECK_FALSE(check_bias_condition({0.75, 3, 0.5}));
  CHECK(check_bias_condition({0.6, 3, 0.0}));
  CHECK(check_bias_condition({0.99, 3, 0.0}));
}

TEST_CASE("idx label parsing from raw bytes") {
  std::string path = "test_labels.idx";
  {
    std::ofstream out(path, std::ios::binary);
    unsigned char bytes[] = {0, 0, 8, 1, 0, 0, 0, 2, 7, 3};
    out.write(reinterpret_cast<const char*>(bytes), sizeof(bytes));
  }
  IdxContent c = load_idx(path);
  CHECK(c.is_labels);
  REQUIRE(c.values.numel() == 2);
  CHECK(c.values[0] == 7.0);
  CHECK(c.values[1] == 3.0);
  std::remove(path.c_str());
}

TEST_CASE("idx format errors carry byte offsets") {
  std::string path = "test_bad.idx";
  {
    std::ofstream out(path, std::ios::binary);
    unsigned char bytes[] = {0, 0, 9, 9, 0, 0, 0, 1};
    out.write(reinterpret_cast<const char*>(bytes), sizeof(bytes));
  }
  CHECK_THROWS_WITH_AS(load_idx(path), doctest::Contains("byte offset 0"), Error);
  {
    std::ofstream out(path, std::ios::binary);
    // image magic, 2 images of 28x28 declared but only one byte of payload
    unsigned char bytes[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28, 0xff};
    out.write(reinterpret_cast<const char*>(bytes), sizeof(bytes));
  }
  CHECK_THROWS_AS(load_idx(path), Error);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_idx("missing_file.idx"), Error);
}

TEST_CASE("idx image round trip") {
  Rng rng(6);
  Tensor images({2, 784});
  for (std::size_t i = 0; i < images.numel(); ++i) images[i] = uniform01(rng);
  std::string path = "test_images.idx";
  write_idx_images(path, images, 28, 28);
  IdxContent c = load_idx(path);
  CHECK_FALSE(c.is_labels);
  CHECK(c.image_rows == 28);
  REQUIRE(c.values.numel() == images.numel());
  for (std::size_t i = 0; i < images.numel(); ++i)
    CHECK(std::fabs(c.values[i] - images[i]) <= 0.5 / 255.0 + 1e-12);  // byte quantization
  std::remove(path.c_str());
}

TEST_CASE("canonical colored-mnist group counts") {
  CHECK(conflicting_count_for(55000, 0.005) == 249);
  CHECK(conflicting_count_for(55000, 0.01) == 491);
  CHECK(conflicting_count_for(55000, 0.02) == 986);
  CHECK(conflicting_count_for(55000, 0.05) == 2449);
  CHECK(conflicting_count_for(2000, 0.013) == 26);
  CHECK(conflicting_count_for(1000, 1e-9) == 0);  // rho -> 0: no conflicting samples
}

TEST_CASE("colored digits: tint structure and group flags") {
  Rng rng(7);
  std::size_t n = 400;
  Tensor images({n, 784});
  std::vector<int> labels(n);
  for (std::size_t s = 0; s < n; ++s) {
    labels[s] = static_cast<int>(uniform_index(rng, 10));
    for (std::size_t p = 0; p < 784; ++p) images.at(s, p) = uniform01(rng);
  }
  ColoredMnistSpec spec;
  spec.rho = 0.05;
  BiasedDataset ds = generate_colored_mnist(images, labels, spec, rng);
  ds.validate();
  CHECK(ds.conflicting_count() == conflicting_count_for(n, 0.05));
  for (std::size_t s = 0; s < n; ++s) {
    int color = ds.bias_labels[s];
    if (ds.aligned[s]) CHECK(color == labels[s]);
    else CHECK(color != labels[s]);
    const auto& rgb = kColorPalette[static_cast<std::size_t>(color)];
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t p = 0; p < 784; p += 97)
        CHECK(ds.inputs.at(s, ch * 784 + p) ==
              doctest::Approx(images.at(s, p) * rgb[ch]).epsilon(1e-15));
  }
}

TEST_CASE("colored digits: test mode color histogram is uniform") {
  Rng rng(8);
  std::size_t n = 12000;
  Tensor images({n, 4});  // pixel payload size is irrelevant here
  std::vector<int> labels(n);
  for (std::size_t s = 0; s < n; ++s) labels[s] = static_cast<int>(uniform_index(rng, 10));
  ColoredMnistSpec spec;
  spec.test_mode = true;
  BiasedDataset ds = generate_colored_mnist(images, labels, spec, rng);
  std::vector<std::size_t> counts(10, 0);
  for (int c : ds.bias_labels) counts[static_cast<std::size_t>(c)]++;
  double expect = static_cast<double>(n) / 10.0;
  double sigma = std::sqrt(static_cast<double>(n) * 0.1 * 0.9);
  for (std::size_t c = 0; c < 10; ++c)
    CHECK(std::fabs(static_cast<double>(counts[c]) - expect) < 3.0 * sigma);
}

TEST_CASE("digit glyph synthesizer writes loadable idx with all ten classes") {
  std::string imgs = "test_digits.idx", labs = "test_digit_labels.idx";
  synthesize_digit_idx(imgs, labs, 300, 42);
  IdxContent ic = load_idx(imgs);
  IdxContent lc = load_idx(labs);
  CHECK_FALSE(ic.is_labels);
  CHECK(lc.is_labels);
  CHECK(ic.values.rows() == 300);
  CHECK(ic.values.cols() == 784);
  std::vector<int> seen(10, 0);
  for (std::size_t i = 0; i < 300; ++i) seen[static_cast<std::size_t>(lc.values[i])]++;
  for (int c : seen) CHECK(c > 0);
  // glyphs have ink
  double total = 0.0;
  for (std::size_t i = 0; i < ic.values.numel(); ++i) total += ic.values[i];
  CHECK(total / 300.0 > 10.0);
  std::remove(imgs.c_str());
  std::remove(labs.c_str());
}

TEST_CASE("synthetic coded environment") {
  SyntheticSpec spec;
  spec.rho = 0.1;
  Rng rng(9);
  std::size_t n = 4000;
  BiasedDataset train = generate_synthetic(spec, n, rng);
  train.validate();
  double aligned_frac = static_cast<double>(train.aligned_count()) / static_cast<double>(n);
  double sigma = std::sqrt(0.1 * 0.9 / static_cast<double>(n));
  CHECK(std::fabs(aligned_frac - 0.9) < 4.0 * sigma);

  // class balance
  std::vector<std::size_t> per_class(spec.classes, 0);
  for (int y : train.labels) per_class[static_cast<std::size_t>(y)]++;
  for (std::size_t c = 0; c < spec.classes; ++c)
    CHECK(static_cast<double>(per_class[c]) > 0.2 * static_cast<double>(n) / spec.classes);

  // codebook is shared between train and test mode
  SyntheticSpec clean = spec;
  clean.invariant_noise = 0.0;
  clean.spurious_noise = 0.0;
  SyntheticSpec clean_test = clean;
  clean_test.test_mode = true;
  Rng r1(11), r2(12);
  BiasedDataset a = generate_synthetic(clean, 500, r1);
  BiasedDataset b = generate_synthetic(clean_test, 500, r2);
  bool found = false;
  for (std::size_t i = 0; i < a.size() && !found; ++i)
    for (std::size_t j = 0; j < b.size() && !found; ++j)
      if (a.labels[i] == b.labels[j] && a.bias_labels[i] == b.bias_labels[j]) {
        for (std::size_t c = 0; c < a.inputs.cols(); ++c)
          CHECK(a.inputs.at(i, c) == b.inputs.at(j, c));
        found = true;
      }
  CHECK(found);
}

TEST_CASE("dataset container round trip") {
  SyntheticSpec spec;
  Rng rng(10);
  BiasedDataset ds = generate_synthetic(spec, 120, rng);
  std::string path = "test_dataset.bin";
  save_dataset(ds, path);
  BiasedDataset loaded = load_dataset(path);
  CHECK(loaded.classes == ds.classes);
  CHECK(loaded.bias_values == ds.bias_values);
  CHECK(loaded.labels == ds.labels);
  CHECK(loaded.bias_labels == ds.bias_labels);
  CHECK(loaded.aligned == ds.aligned);
  for (std::size_t i = 0; i < ds.inputs.numel(); ++i) CHECK(loaded.inputs[i] == ds.inputs[i]);
  std::remove(path.c_str());
}

TEST_SUITE_END();
