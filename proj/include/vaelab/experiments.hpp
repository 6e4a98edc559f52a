#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vaelab/data.hpp"
#include "vaelab/model.hpp"
#include "vaelab/objectives.hpp"
#include "vaelab/training.hpp"

namespace vaelab {

struct SweepSpec {
  std::vector<std::size_t> L_values{1, 2, 3, 4, 5, 6, 7, 8};
  std::vector<std::size_t> M_values{20, 60, 100, 140};
  std::vector<std::size_t> depth_values{1, 2, 3, 4};
  std::size_t repetitions = 1;
  TrainConfig base;  // base.seed is the master seed
  MlpConfig model;
  Likelihood likelihood = Likelihood::bernoulli;

  void validate() const;
};

/// Seed of one (L, M, rep) cell. Depends only on the master seed and the
/// cell's coordinates, so a cell reruns identically inside any grid.
std::uint64_t cell_seed(std::uint64_t master, std::size_t L, std::size_t M, std::size_t rep);

struct SweepRow {
  bool aggregate = false;  // false: one training run; true: mean/stddev over reps
  std::size_t L = 0;
  std::size_t M = 0;
  std::size_t rep = 0;
  double train_elbo = 0.0;
  double val_elbo = 0.0;
  double train_elbo_std = 0.0;  // aggregate rows only
  double val_elbo_std = 0.0;

  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepTable {
  static constexpr const char* kCsvHeader = "kind,L,M,rep,train_elbo,val_elbo,train_elbo_std,val_elbo_std";
  std::vector<SweepRow> rows;  // run rows in (L, M, rep) order, then aggregates in (L, M) order

  std::size_t run_rows() const;
  std::size_t aggregate_rows() const;
  std::string to_csv() const;
};

/// Trains every (L, M, rep) cell. `parallel` > 1 runs cells on worker
/// threads; output order is fixed regardless.
SweepTable sweep_lm(const Dataset& train_set, const Dataset& val_set, const SweepSpec& spec, std::size_t parallel = 1);

struct DepthRow {
  std::size_t depth = 0;
  std::size_t epoch = 0;
  double val_elbo = 0.0;
};

struct DepthTable {
  static constexpr const char* kCsvHeader = "depth,epoch,val_elbo";
  std::vector<DepthRow> rows;
  std::string to_csv() const;
};

/// One training curve per depth; every hidden layer has model.hidden_dims[0] units.
DepthTable sweep_depth(const Dataset& train_set, const Dataset& val_set, const SweepSpec& spec);

struct VarianceReport {
  std::size_t draws = 0;
  double mean_a = 0.0, var_a = 0.0;
  double mean_b = 0.0, var_b = 0.0;
  double pooled_se = 0.0;  // sqrt(var_a / draws + var_b / draws)

  bool variance_dominates() const { return var_b <= var_a; }
  bool means_agree(double k = 3.0) const;
  std::string to_text() const;
};

/// Repeated single evaluations of both estimators on a fixed model and batch.
VarianceReport estimator_variance(const VaeModel& model, const Tensor& batch, std::size_t samples, std::size_t draws,
                                  SeededRng& rng);

struct EstimatorRow {
  Estimator estimator = Estimator::b;
  std::size_t latent_dim = 0;
  std::size_t epoch = 0;
  double val_elbo = 0.0;
};

struct EstimatorComparison {
  static constexpr const char* kCsvHeader = "estimator,N_z,epoch,val_elbo";
  std::vector<EstimatorRow> rows;
  VarianceReport variance;
  std::string to_csv() const;
};

/// Paired A/B runs per latent size from a shared initialization, plus a
/// variance report over `variance_draws` draws on a frozen initialized model.
/// Each run logs an epoch-0 row scoring its starting model.
EstimatorComparison compare_estimators(const Dataset& train_set, const Dataset& val_set,
                                       const std::vector<std::size_t>& latent_dims, const SweepSpec& spec,
                                       std::size_t variance_draws = 1000);

/// Grey-level mosaic of equally sized cells; pixels in [0,1], row-major.
struct ImageGrid {
  std::size_t rows = 0, cols = 0;
  std::size_t cell_h = 0, cell_w = 0;
  std::vector<double> pixels;

  ImageGrid() = default;
  ImageGrid(std::size_t rows, std::size_t cols, std::size_t cell_h, std::size_t cell_w);
  std::size_t height() const noexcept { return rows * cell_h; }
  std::size_t width() const noexcept { return cols * cell_w; }
  /// Values are clamped into [0,1].
  void set_cell(std::size_t r, std::size_t c, std::span<const double> values);
};

struct PgmImage {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;
  friend bool operator==(const PgmImage&, const PgmImage&) = default;
};

/// "P5\n<w> <h>\n255\n" followed by w*h bytes, round(v * 255).
std::vector<std::uint8_t> encode_pgm(const ImageGrid& grid);
std::vector<std::uint8_t> encode_pgm(const PgmImage& image);
/// Accepts the layout encode_pgm writes (and comments/whitespace in the
/// header); throws FormatError otherwise.
PgmImage parse_pgm(std::span<const std::uint8_t> bytes);

/// Cell side for a D-dimensional item: item_dims if it has two entries,
/// otherwise the integer square root of D.
std::pair<std::size_t, std::size_t> cell_shape(std::size_t dim, const std::vector<std::size_t>& item_dims);

/// K x K decoder means at z = (inv_cdf((i+0.5)/K), inv_cdf((j+0.5)/K));
/// rows follow the first latent coordinate.
ImageGrid manifold_grid(const VaeModel& model, std::size_t k, std::size_t cell_h, std::size_t cell_w);

struct ReconstructionReport {
  std::vector<std::string> variants;
  std::vector<std::vector<double>> mse;  // [example][variant]
  std::vector<double> mean_mse;          // [variant]
  std::vector<ImageGrid> pairs;          // one row per example: original, then each variant

  /// Header "example,<variant>..."; n_examples rows plus a final "mean" row.
  std::string to_csv() const;
};

/// Each variant's decode is seeded from `seed` alone, so variants see the
/// same latent noise in sample_avg mode.
ReconstructionReport reconstruction_report(const std::vector<std::pair<std::string, VaeModel>>& variants,
                                           const Dataset& ds, std::size_t n_examples, DecodeMode mode,
                                           std::uint64_t seed);

}  // namespace vaelab
