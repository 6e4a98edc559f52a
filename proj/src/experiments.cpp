#include "vaelab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "vaelab/distributions.hpp"
#include "vaelab/errors.hpp"

namespace vaelab {

namespace {

void require_positive(const std::vector<std::size_t>& v, const char* name) {
  if (v.empty()) throw ContractError(std::string(name) + " must not be empty");
  for (std::size_t x : v) {
    if (x == 0) throw ContractError(std::string(name) + " must be positive");
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Sample standard deviation; 0 for a single value.
double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double last_val_elbo(const TrainResult& r) { return r.log.rows.empty() ? std::nan("") : r.log.rows.back().val_elbo; }

}  // namespace

void SweepSpec::validate() const {
  require_positive(L_values, "L values");
  require_positive(M_values, "M values");
  require_positive(depth_values, "depth values");
  if (repetitions == 0) throw ContractError("repetitions must be at least 1");
  for (std::size_t d : depth_values) {
    if (d > 4) throw ContractError("depth values must lie in 1..4");
  }
}

std::uint64_t cell_seed(std::uint64_t master, std::size_t L, std::size_t M, std::size_t rep) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ static_cast<std::uint64_t>(L));
  h = splitmix64(h ^ static_cast<std::uint64_t>(M));
  return splitmix64(h ^ static_cast<std::uint64_t>(rep));
}

std::size_t SweepTable::run_rows() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const SweepRow& r) { return !r.aggregate; }));
}

std::size_t SweepTable::aggregate_rows() const { return rows.size() - run_rows(); }

std::string SweepTable::to_csv() const {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += (r.aggregate ? "mean," : "run,") + std::to_string(r.L) + ',' + std::to_string(r.M) + ',' +
           (r.aggregate ? std::string() : std::to_string(r.rep)) + ',' + format_double(r.train_elbo) + ',' +
           format_double(r.val_elbo) + ',' + format_double(r.train_elbo_std) + ',' + format_double(r.val_elbo_std) +
           '\n';
  }
  return out;
}

SweepTable sweep_lm(const Dataset& train_set, const Dataset& val_set, const SweepSpec& spec, std::size_t parallel) {
  spec.validate();
  struct Cell {
    std::size_t L, M, rep;
  };
  std::vector<Cell> cells;
  for (std::size_t L : spec.L_values)
    for (std::size_t M : spec.M_values)
      for (std::size_t rep = 0; rep < spec.repetitions; ++rep) cells.push_back({L, M, rep});

  std::vector<SweepRow> runs(cells.size());
  auto run_cell = [&](std::size_t i) {
    const Cell& c = cells[i];
    TrainConfig cfg = spec.base;
    cfg.samples = c.L;
    cfg.batch_size = c.M;
    cfg.seed = cell_seed(spec.base.seed, c.L, c.M, c.rep);
    cfg.eval_every = std::max<std::size_t>(cfg.epochs, 1);
    const TrainResult r = train(train_set, val_set, spec.model, spec.likelihood, cfg);
    SweepRow row;
    row.L = c.L;
    row.M = c.M;
    row.rep = c.rep;
    row.train_elbo = r.final_train.elbo_per_datapoint;
    row.val_elbo = last_val_elbo(r);
    runs[i] = row;
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(parallel, cells.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < cells.size(); i = next++) {
          try {
            run_cell(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  SweepTable table;
  table.rows = runs;
  for (std::size_t L : spec.L_values) {
    for (std::size_t M : spec.M_values) {
      std::vector<double> tr, va;
      for (const auto& r : runs) {
        if (r.L == L && r.M == M) {
          tr.push_back(r.train_elbo);
          va.push_back(r.val_elbo);
        }
      }
      SweepRow agg;
      agg.aggregate = true;
      agg.L = L;
      agg.M = M;
      agg.train_elbo = mean_of(tr);
      agg.val_elbo = mean_of(va);
      agg.train_elbo_std = stddev_of(tr);
      agg.val_elbo_std = stddev_of(va);
      table.rows.push_back(agg);
    }
  }
  return table;
}

std::string DepthTable::to_csv() const {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.depth) + ',' + std::to_string(r.epoch) + ',' + format_double(r.val_elbo) + '\n';
  }
  return out;
}

DepthTable sweep_depth(const Dataset& train_set, const Dataset& val_set, const SweepSpec& spec) {
  spec.validate();
  if (spec.model.hidden_dims.empty()) throw ContractError("depth sweep needs a hidden width");
  DepthTable table;
  for (std::size_t depth : spec.depth_values) {
    MlpConfig mc = spec.model;
    mc.hidden_dims.assign(depth, spec.model.hidden_dims.front());
    TrainConfig cfg = spec.base;
    cfg.seed = cell_seed(spec.base.seed, 0, depth, 0);
    const TrainResult r = train(train_set, val_set, mc, spec.likelihood, cfg);
    for (const auto& row : r.log.rows) table.rows.push_back({depth, row.epoch, row.val_elbo});
  }
  return table;
}

bool VarianceReport::means_agree(double k) const { return std::abs(mean_a - mean_b) <= k * pooled_se; }

std::string VarianceReport::to_text() const {
  std::string out;
  out += "draws " + std::to_string(draws) + '\n';
  out += "estimator_a mean " + format_double(mean_a) + " variance " + format_double(var_a) + '\n';
  out += "estimator_b mean " + format_double(mean_b) + " variance " + format_double(var_b) + '\n';
  out += "pooled_se " + format_double(pooled_se) + '\n';
  out += std::string("variance_b_le_a ") + (variance_dominates() ? "yes" : "no") + '\n';
  out += std::string("means_within_3se ") + (means_agree() ? "yes" : "no") + '\n';
  return out;
}

VarianceReport estimator_variance(const VaeModel& model, const Tensor& batch, std::size_t samples, std::size_t draws,
                                  SeededRng& rng) {
  if (draws < 2) throw ContractError("variance report needs at least 2 draws");
  ObjectiveConfig a_cfg;
  a_cfg.estimator = Estimator::a;
  a_cfg.samples = samples;
  ObjectiveConfig b_cfg = a_cfg;
  b_cfg.estimator = Estimator::b;
  std::vector<double> a(draws), b(draws);
  for (std::size_t i = 0; i < draws; ++i) {
    a[i] = elbo_estimate(model, batch, a_cfg, rng).total;
    b[i] = elbo_estimate(model, batch, b_cfg, rng).total;
  }
  VarianceReport rep;
  rep.draws = draws;
  rep.mean_a = mean_of(a);
  rep.mean_b = mean_of(b);
  rep.var_a = std::pow(stddev_of(a), 2);
  rep.var_b = std::pow(stddev_of(b), 2);
  const double n = static_cast<double>(draws);
  rep.pooled_se = std::sqrt(rep.var_a / n + rep.var_b / n);
  return rep;
}

std::string EstimatorComparison::to_csv() const {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : rows) {
    out += to_string(r.estimator) + ',' + std::to_string(r.latent_dim) + ',' + std::to_string(r.epoch) + ',' +
           format_double(r.val_elbo) + '\n';
  }
  return out;
}

EstimatorComparison compare_estimators(const Dataset& train_set, const Dataset& val_set,
                                       const std::vector<std::size_t>& latent_dims, const SweepSpec& spec,
                                       std::size_t variance_draws) {
  require_positive(latent_dims, "latent dims");
  const SeededRng root(spec.base.seed);
  EstimatorComparison out;
  for (std::size_t li = 0; li < latent_dims.size(); ++li) {
    MlpConfig mc = spec.model;
    mc.latent_dim = latent_dims[li];
    SeededRng init_rng = root.derive(li);
    const VaeModel start = init_model(mc, spec.likelihood, init_rng);
    for (Estimator est : {Estimator::a, Estimator::b}) {
      TrainConfig cfg = spec.base;
      cfg.estimator = est;
      cfg.samples = 1;
      const TrainResult r = train(train_set, val_set, mc, spec.likelihood, cfg, start);
      out.rows.push_back({est, mc.latent_dim, 0, r.initial_val ? r.initial_val->elbo_per_datapoint : std::nan("")});
      for (const auto& row : r.log.rows) out.rows.push_back({est, mc.latent_dim, row.epoch, row.val_elbo});
    }
  }

  MlpConfig mc = spec.model;
  mc.latent_dim = latent_dims.front();
  SeededRng init_rng = root.derive(0);
  const VaeModel frozen = init_model(mc, spec.likelihood, init_rng);
  const std::size_t m = std::min(spec.base.batch_size, train_set.size());
  const Tensor batch = train_set.x.row_slice(0, m);
  SeededRng draw_rng = root.derive(1u << 20);
  out.variance = estimator_variance(frozen, batch, 1, variance_draws, draw_rng);
  return out;
}

ImageGrid::ImageGrid(std::size_t r, std::size_t c, std::size_t h, std::size_t w)
    : rows(r), cols(c), cell_h(h), cell_w(w), pixels(r * c * h * w, 0.0) {}

void ImageGrid::set_cell(std::size_t r, std::size_t c, std::span<const double> values) {
  if (r >= rows || c >= cols) throw ContractError("grid cell out of range");
  if (values.size() != cell_h * cell_w) {
    throw ShapeError("cell expects " + std::to_string(cell_h * cell_w) + " values, got " +
                     std::to_string(values.size()));
  }
  const std::size_t w = width();
  for (std::size_t y = 0; y < cell_h; ++y) {
    for (std::size_t x = 0; x < cell_w; ++x) {
      const double v = values[y * cell_w + x];
      pixels[(r * cell_h + y) * w + c * cell_w + x] = std::isnan(v) ? 0.0 : std::clamp(v, 0.0, 1.0);
    }
  }
}

std::vector<std::uint8_t> encode_pgm(const PgmImage& image) {
  if (image.pixels.size() != image.width * image.height) throw ShapeError("PGM pixel count does not match its size");
  const std::string header = "P5\n" + std::to_string(image.width) + ' ' + std::to_string(image.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

std::vector<std::uint8_t> encode_pgm(const ImageGrid& grid) {
  PgmImage img;
  img.width = grid.width();
  img.height = grid.height();
  img.pixels.reserve(grid.pixels.size());
  for (double v : grid.pixels) img.pixels.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  return encode_pgm(img);
}

PgmImage parse_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto is_space = [](std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; };
  auto skip = [&] {
    while (pos < bytes.size()) {
      if (is_space(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip();
    const std::size_t at = pos;
    std::size_t v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      if (v > 100000000) throw FormatError(std::string("PGM ") + what + " too large", at);
      v = v * 10 + (bytes[pos] - '0');
      ++pos;
    }
    if (pos == at) throw FormatError(std::string("PGM ") + what + " missing", at);
    return v;
  };

  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') throw FormatError("not a binary PGM (P5)", 0);
  pos = 2;
  PgmImage img;
  img.width = number("width");
  img.height = number("height");
  const std::size_t maxval_at = pos;
  if (number("maxval") != 255) throw FormatError("only maxval 255 is supported", maxval_at);
  if (pos >= bytes.size() || !is_space(bytes[pos])) throw FormatError("PGM header not terminated", pos);
  ++pos;
  const std::size_t n = img.width * img.height;
  if (bytes.size() - pos != n) throw FormatError("PGM payload length does not match its size", pos);
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

std::pair<std::size_t, std::size_t> cell_shape(std::size_t dim, const std::vector<std::size_t>& item_dims) {
  if (item_dims.size() == 2 && item_dims[0] * item_dims[1] == dim) return {item_dims[0], item_dims[1]};
  const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(dim))));
  if (side * side == dim) return {side, side};
  return {1, dim};
}

ImageGrid manifold_grid(const VaeModel& model, std::size_t k, std::size_t cell_h, std::size_t cell_w) {
  if (model.config.latent_dim != 2) throw ContractError("manifold grid needs a 2-D latent space");
  if (k == 0) throw ContractError("grid side must be at least 1");
  if (cell_h * cell_w != model.config.input_dim) throw ShapeError("cell shape does not match the data dimension");
  std::vector<double> coord(k);
  for (std::size_t i = 0; i < k; ++i) {
    coord[i] = inverse_normal_cdf((static_cast<double>(i) + 0.5) / static_cast<double>(k));
  }
  Tensor z = Tensor::zeros({k * k, 2});
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      z.data()[(i * k + j) * 2] = coord[i];
      z.data()[(i * k + j) * 2 + 1] = coord[j];
    }
  }
  Tape tape;
  const ModelView view = bind(tape, model);
  const Tensor means = decoder_mean(view, tape.constant(z)).value();
  ImageGrid grid(k, k, cell_h, cell_w);
  const std::size_t d = model.config.input_dim;
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) {
      grid.set_cell(i, j, means.data().subspan((i * k + j) * d, d));
    }
  }
  return grid;
}

std::string ReconstructionReport::to_csv() const {
  std::string out = "example";
  for (const auto& v : variants) out += ',' + v;
  out += '\n';
  for (std::size_t i = 0; i < mse.size(); ++i) {
    out += std::to_string(i);
    for (double v : mse[i]) out += ',' + format_double(v);
    out += '\n';
  }
  out += "mean";
  for (double v : mean_mse) out += ',' + format_double(v);
  out += '\n';
  return out;
}

ReconstructionReport reconstruction_report(const std::vector<std::pair<std::string, VaeModel>>& variants,
                                           const Dataset& ds, std::size_t n_examples, DecodeMode mode,
                                           std::uint64_t seed) {
  if (variants.empty()) throw ContractError("reconstruction report needs at least one model");
  if (n_examples == 0 || n_examples > ds.size()) {
    throw ContractError("n_examples must lie in 1.." + std::to_string(ds.size()));
  }
  const Tensor batch = ds.x.row_slice(0, n_examples);
  const std::size_t d = ds.dim();
  const auto [h, w] = cell_shape(d, ds.item_dims);

  ReconstructionReport rep;
  rep.mse.assign(n_examples, std::vector<double>(variants.size(), 0.0));
  rep.mean_mse.assign(variants.size(), 0.0);
  for (std::size_t i = 0; i < n_examples; ++i) {
    rep.pairs.emplace_back(1, variants.size() + 1, h, w);
    rep.pairs.back().set_cell(0, 0, batch.data().subspan(i * d, d));
  }
  for (std::size_t v = 0; v < variants.size(); ++v) {
    const auto& [name, model] = variants[v];
    if (model.config.input_dim != d) throw ShapeError("model '" + name + "' does not match the dataset width");
    rep.variants.push_back(name);
    SeededRng rng(seed);
    const Tensor x_hat = reconstruct(model, batch, mode, rng);
    const std::vector<double> per = row_mse(batch, x_hat);
    for (std::size_t i = 0; i < n_examples; ++i) {
      rep.mse[i][v] = per[i];
      rep.pairs[i].set_cell(0, v + 1, x_hat.data().subspan(i * d, d));
    }
    rep.mean_mse[v] = mean_of(per);
  }
  return rep;
}

}  // namespace vaelab
