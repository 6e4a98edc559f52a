#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vaelab/rng.hpp"
#include "vaelab/tensor.hpp"

namespace vaelab {

enum class PixelRange { unit_interval, binary, real };
enum class Split { train, val, test };

std::string to_string(PixelRange r);
std::string to_string(Split s);

struct Dataset {
  Tensor x;  // [N x D]
  PixelRange pixel_range = PixelRange::unit_interval;
  std::string name;
  Split split = Split::train;
  std::vector<std::size_t> item_dims;  // per-row layout, e.g. {rows, cols} for images
  std::vector<std::uint8_t> labels;    // optional, one per row

  std::size_t size() const noexcept { return x.rank() == 2 ? x.shape()[0] : 0; }
  std::size_t dim() const noexcept { return x.rank() == 2 ? x.shape()[1] : 0; }

  /// Throws ContractError when the declared range or N >= 1 is violated.
  void validate() const;
  Dataset subset(std::span<const std::size_t> rows) const;
  Dataset head(std::size_t n) const;
};

// IDX container: 4-byte big-endian magic 0x00000803 (unsigned-byte images,
// three dimensions) or 0x00000801 (unsigned-byte labels, one dimension),
// one 4-byte big-endian size per dimension, then the raw bytes.
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Parse an image file (and optional label file) held in memory. Pixels are
/// scaled by 1/255. Every malformed input raises FormatError.
Dataset parse_idx(std::span<const std::uint8_t> images, std::optional<std::span<const std::uint8_t>> labels = {},
                  std::string name = "idx");
Dataset load_idx(const std::string& images_path, const std::optional<std::string>& labels_path = {});

/// Quantize to bytes (round(x * 255)) and emit an image file. Rows must be in [0, 1].
std::vector<std::uint8_t> encode_idx_images(const Dataset& ds);
std::vector<std::uint8_t> encode_idx_labels(const Dataset& ds);
void save_idx(const Dataset& ds, const std::string& images_path, const std::optional<std::string>& labels_path = {});

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

/// x > threshold -> 1, else 0.
Dataset binarize(const Dataset& ds, double threshold);
/// Each pixel becomes Bernoulli(x).
Dataset binarize(const Dataset& ds, SeededRng& rng);

/// Linear-Gaussian generative model x = W z + b + noise, z ~ N(0, I),
/// noise ~ N(0, noise_var I). The marginal is N(b, W W^T + noise_var I).
struct LinearGaussianTruth {
  Tensor weight;  // [D_x x D_z]
  Tensor bias;    // [D_x]
  double noise_var = 1.0;

  double log_evidence(std::span<const double> x) const;
};

struct SyntheticSpec {
  enum Generator { vae_ground_truth, gaussian_mixture, face_like } generator = vae_ground_truth;
  std::size_t latent_dim = 2;
  std::size_t data_dim = 8;
  std::size_t n_points = 500;
  std::uint64_t seed = 0;
  std::optional<LinearGaussianTruth> truth;  // drawn from the seed when absent
  double noise_var = 0.01;                   // vae_ground_truth when truth is absent
  std::size_t clusters = 3;                  // gaussian_mixture
  std::size_t image_side = 16;               // face_like: images are side x side
  double pixel_noise = 0.02;                 // face_like: per-pixel Gaussian noise sd

  void validate() const;
};

std::string to_string(SyntheticSpec::Generator g);
SyntheticSpec::Generator parse_generator(const std::string& name);

struct SyntheticData {
  Dataset data;
  std::optional<LinearGaussianTruth> truth;
};

/// vae_ground_truth: real-valued rows from the linear-Gaussian model.
/// gaussian_mixture: labelled clusters with unit-scale spread.
/// face_like: grey-level faces in [0, 1] whose pose and expression vary
/// smoothly with a two-dimensional latent (data_dim is ignored).
SyntheticData generate_synthetic(const SyntheticSpec& spec);

/// JSON sidecar describing the generator and ground truth. `offset` and
/// `scale` record the affine map used to quantize real values into bytes:
/// stored = (x - offset) / scale.
std::string ground_truth_json(const SyntheticSpec& spec, const SyntheticData& data, double offset, double scale);

/// Min-max rescale into [0, 1]; returns the dataset plus (offset, scale).
std::pair<Dataset, std::pair<double, double>> normalize_unit(const Dataset& ds);

struct DatasetSplits {
  Dataset train, val, test;
};

/// Seeded disjoint partition. Sizes: floor(f0 N), floor(f1 N), remainder.
/// Rows keep their original relative order within each part.
DatasetSplits split(const Dataset& ds, std::array<double, 3> fractions, std::uint64_t seed);

}  // namespace vaelab
