// vaelab: train and inspect variational auto-encoders from the command line.
//
// Exit codes: 0 success, 1 runtime failure (numeric abort, IO, bad input
// file), 2 usage error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vaelab/checkpoint.hpp"
#include "vaelab/data.hpp"
#include "vaelab/errors.hpp"
#include "vaelab/experiments.hpp"
#include "vaelab/training.hpp"

namespace fs = std::filesystem;
using namespace vaelab;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DataOptions {
  std::string synthetic;
  std::string idx;
  std::string labels;
  std::size_t n_points = 500;
  std::size_t synth_dim = 8;
  std::size_t synth_latent = 2;
  double noise_var = 0.01;
  std::size_t image_side = 16;
  double binarize_threshold = -1.0;
  double val_fraction = 0.1;
  double test_fraction = 0.0;
  std::string likelihood = "auto";
};

struct ModelOptions {
  std::vector<std::size_t> hidden{500};
  std::size_t latent = 10;
  std::string activation = "tanh";
};

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t batch = 100;
  std::size_t samples = 1;
  std::string estimator = "b";
  double lr = 0.01;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  std::string mode = "point";
  bool with_replacement = false;
  bool wall_time = false;
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
  auto* syn = cmd->add_option("--synthetic", o.synthetic, "Generator: vae-ground-truth, gaussian-mixture, faces");
  auto* idx = cmd->add_option("--idx", o.idx, "IDX image file (magic 0x803)");
  syn->excludes(idx);
  cmd->add_option("--labels", o.labels, "IDX label file (magic 0x801)")->needs(idx);
  cmd->add_option("--n-points", o.n_points, "Synthetic dataset size")->check(CLI::PositiveNumber);
  cmd->add_option("--synth-dim", o.synth_dim, "Synthetic data dimension")->check(CLI::PositiveNumber);
  cmd->add_option("--synth-latent", o.synth_latent, "Latent dimension of the synthetic generator")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--noise-var", o.noise_var, "Observation noise of vae-ground-truth")->check(CLI::PositiveNumber);
  cmd->add_option("--image-side", o.image_side, "Side of generated face images")->check(CLI::PositiveNumber);
  cmd->add_option("--binarize", o.binarize_threshold, "Threshold pixels (x > t becomes 1)");
  cmd->add_option("--val-fraction", o.val_fraction, "Validation share of the data")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--test-fraction", o.test_fraction, "Held-out test share of the data")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--likelihood", o.likelihood, "Decoder likelihood")
      ->check(CLI::IsMember({"auto", "bernoulli", "gaussian"}));
}

void add_model_options(CLI::App* cmd, ModelOptions& o) {
  cmd->add_option("--hidden", o.hidden, "Hidden layer widths, encoder order")->delimiter(',');
  cmd->add_option("--latent", o.latent, "Latent dimension N_z")->check(CLI::PositiveNumber);
  cmd->add_option("--activation", o.activation, "Hidden activation")->check(CLI::IsMember({"tanh", "sigmoid", "relu"}));
}

void add_train_options(CLI::App* cmd, TrainOptions& o) {
  cmd->add_option("--epochs", o.epochs, "Epoch budget");
  cmd->add_option("--batch", o.batch, "Minibatch size M")->check(CLI::PositiveNumber);
  cmd->add_option("--samples", o.samples, "Latent samples per datapoint L")->check(CLI::PositiveNumber);
  cmd->add_option("--estimator", o.estimator, "ELBO estimator")->check(CLI::IsMember({"a", "b"}));
  cmd->add_option("--lr", o.lr, "AdaGrad learning rate")->check(CLI::PositiveNumber);
  cmd->add_option("--weight-decay", o.weight_decay, "L2 penalty on weight matrices")->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--eval-every", o.eval_every, "Epochs between log rows")->check(CLI::PositiveNumber);
  cmd->add_option("--mode", o.mode, "point or full-vb")->check(CLI::IsMember({"point", "full-vb"}));
  cmd->add_flag("--with-replacement", o.with_replacement, "Draw minibatches with replacement");
  cmd->add_flag("--wall-time", o.wall_time, "Record wall-clock milliseconds in the log");
}

struct LoadedData {
  Dataset all;
  DatasetSplits parts;
  Likelihood likelihood;
  SyntheticSpec spec;
  std::optional<SyntheticData> synthetic;
};

LoadedData load_data(const DataOptions& o, std::uint64_t seed) {
  LoadedData out;
  if (!o.synthetic.empty()) {
    SyntheticSpec s;
    try {
      s.generator = parse_generator(o.synthetic);
    } catch (const ContractError& e) {
      throw UsageError(e.what());
    }
    s.n_points = o.n_points;
    s.data_dim = o.synth_dim;
    s.latent_dim = o.synth_latent;
    s.noise_var = o.noise_var;
    s.image_side = o.image_side;
    s.seed = seed;
    out.synthetic = generate_synthetic(s);
    out.all = out.synthetic->data;
    out.spec = s;
  } else if (!o.idx.empty()) {
    out.all = load_idx(o.idx, o.labels.empty() ? std::nullopt : std::optional<std::string>(o.labels));
  } else {
    throw UsageError("one of --synthetic or --idx is required");
  }
  if (o.binarize_threshold >= 0.0) {
    if (out.all.pixel_range == PixelRange::real) throw UsageError("--binarize needs data in [0,1]");
    out.all = binarize(out.all, o.binarize_threshold);
  }
  if (o.likelihood == "auto") {
    out.likelihood = out.all.pixel_range == PixelRange::real ? Likelihood::gaussian : Likelihood::bernoulli;
  } else {
    out.likelihood = parse_likelihood(o.likelihood);
  }
  if (out.likelihood == Likelihood::bernoulli && out.all.pixel_range == PixelRange::real) {
    throw UsageError("bernoulli likelihood needs data in [0,1]");
  }
  const double train_fraction = 1.0 - o.val_fraction - o.test_fraction;
  if (train_fraction <= 0.0) throw UsageError("validation and test fractions leave no training data");
  out.parts = split(out.all, {train_fraction, o.val_fraction, o.test_fraction}, seed);
  return out;
}

MlpConfig model_config(const ModelOptions& o, std::size_t input_dim) {
  MlpConfig c;
  c.input_dim = input_dim;
  c.hidden_dims = o.hidden;
  c.latent_dim = o.latent;
  c.activation = parse_activation(o.activation);
  return c;
}

TrainConfig train_config(const TrainOptions& o) {
  TrainConfig c;
  c.epochs = o.epochs;
  c.batch_size = o.batch;
  c.samples = o.samples;
  c.estimator = parse_estimator(o.estimator);
  c.learning_rate = o.lr;
  c.weight_decay = o.weight_decay;
  c.seed = o.seed;
  c.eval_every = o.eval_every;
  c.mode = o.mode == "full-vb" ? TrainConfig::full_vb : TrainConfig::point_estimate;
  c.with_replacement = o.with_replacement;
  c.record_wall_time = o.wall_time;
  return c;
}

std::optional<Dataset> non_empty(const Dataset& ds) {
  if (ds.size() == 0) return std::nullopt;
  return ds;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) { write_file(path.string(), bytes); }

fs::path prepare_out(const std::string& out) {
  fs::path p(out);
  fs::create_directories(p);
  return p;
}

SweepSpec sweep_spec(const ModelOptions& m, const TrainOptions& t, std::size_t input_dim, Likelihood lik) {
  SweepSpec s;
  s.model = model_config(m, input_dim);
  s.base = train_config(t);
  s.likelihood = lik;
  return s;
}

std::string metrics_csv(const Metrics& m) {
  return "n,elbo,elbo_per_datapoint,mse\n" + std::to_string(m.n) + ',' + format_double(m.elbo) + ',' +
         format_double(m.elbo_per_datapoint) + ',' + format_double(m.mse) + '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vaelab: variational auto-encoder laboratory"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --out appear after the subcommand name
  std::string out_dir = "out";
  app.add_option("--out", out_dir, "Output directory")->capture_default_str();

  // train
  DataOptions train_data;
  ModelOptions train_model;
  TrainOptions train_opts;
  std::string init_checkpoint;
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes model.ckpt and train_log.csv");
  add_data_options(train_cmd, train_data);
  add_model_options(train_cmd, train_model);
  add_train_options(train_cmd, train_opts);
  train_cmd->add_option("--init", init_checkpoint, "Start from this checkpoint (full-vb: MAP seed)");

  // sweep-lm
  DataOptions lm_data;
  ModelOptions lm_model;
  TrainOptions lm_opts;
  std::vector<std::size_t> l_values{1, 2, 3, 4, 5, 6, 7, 8}, m_values{20, 60, 100, 140};
  std::size_t reps = 1, parallel = 1;
  auto* lm_cmd = app.add_subcommand("sweep-lm", "Grid over samples L and batch size M; writes sweep_lm.csv");
  add_data_options(lm_cmd, lm_data);
  add_model_options(lm_cmd, lm_model);
  add_train_options(lm_cmd, lm_opts);
  lm_cmd->add_option("--L", l_values, "L values")->delimiter(',');
  lm_cmd->add_option("--M", m_values, "M values")->delimiter(',');
  lm_cmd->add_option("--reps", reps, "Repetitions per cell")->check(CLI::PositiveNumber);
  lm_cmd->add_option("--parallel", parallel, "Worker threads")->check(CLI::PositiveNumber);

  // sweep-depth
  DataOptions depth_data;
  ModelOptions depth_model;
  TrainOptions depth_opts;
  std::vector<std::size_t> depths{1, 2, 3, 4};
  auto* depth_cmd = app.add_subcommand("sweep-depth", "One curve per hidden depth; writes sweep_depth.csv");
  add_data_options(depth_cmd, depth_data);
  add_model_options(depth_cmd, depth_model);
  add_train_options(depth_cmd, depth_opts);
  depth_cmd->add_option("--depths", depths, "Depth values in 1..4")->delimiter(',');

  // compare-estimators
  DataOptions cmp_data;
  ModelOptions cmp_model;
  TrainOptions cmp_opts;
  std::vector<std::size_t> latents{3, 5, 10, 20};
  std::size_t draws = 1000;
  auto* cmp_cmd = app.add_subcommand(
      "compare-estimators", "Paired estimator a/b runs; writes compare_estimators.csv and variance_report.txt");
  add_data_options(cmp_cmd, cmp_data);
  add_model_options(cmp_cmd, cmp_model);
  add_train_options(cmp_cmd, cmp_opts);
  cmp_cmd->add_option("--latents", latents, "Latent sizes")->delimiter(',');
  cmp_cmd->add_option("--variance-draws", draws, "Draws in the variance report")->check(CLI::Range(2, 100000000));

  // manifold
  std::string manifold_ckpt;
  std::size_t grid_k = 20, cell_h = 0, cell_w = 0;
  auto* man_cmd = app.add_subcommand("manifold", "Decode a K x K latent grid; writes manifold.pgm");
  man_cmd->add_option("--checkpoint", manifold_ckpt, "Model checkpoint")->required();
  man_cmd->add_option("--k", grid_k, "Grid side")->check(CLI::PositiveNumber);
  man_cmd->add_option("--cell-h", cell_h, "Cell height (default: square cells)");
  man_cmd->add_option("--cell-w", cell_w, "Cell width (default: square cells)");

  // reconstruct
  DataOptions rec_data;
  std::vector<std::string> rec_ckpts;
  std::size_t rec_n = 10, rec_k = 1;
  std::uint64_t rec_seed = 0;
  std::string rec_decode = "mean", rec_split = "test";
  auto* rec_cmd =
      app.add_subcommand("reconstruct", "Original/reconstruction pairs; writes reconstruct_<i>.pgm and reconstruct_mse.csv");
  add_data_options(rec_cmd, rec_data);
  rec_cmd->add_option("--checkpoint", rec_ckpts, "name=path, repeatable")->required();
  rec_cmd->add_option("--n", rec_n, "Number of examples")->check(CLI::PositiveNumber);
  rec_cmd->add_option("--decode", rec_decode, "mean or sample")->check(CLI::IsMember({"mean", "sample"}));
  rec_cmd->add_option("--k", rec_k, "Samples averaged in sample mode")->check(CLI::PositiveNumber);
  rec_cmd->add_option("--seed", rec_seed, "Split and decode seed");
  rec_cmd->add_option("--split", rec_split, "Which part of the data to use")
      ->check(CLI::IsMember({"all", "train", "val", "test"}));

  // eval
  DataOptions eval_data;
  std::string eval_ckpt, eval_split = "all";
  std::uint64_t eval_seed = 0;
  std::size_t eval_samples = 1;
  auto* eval_cmd = app.add_subcommand("eval", "ELBO (estimator b) and mean-mode MSE; writes eval.csv");
  add_data_options(eval_cmd, eval_data);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
  eval_cmd->add_option("--seed", eval_seed, "Split and noise seed");
  eval_cmd->add_option("--samples", eval_samples, "Latent samples per datapoint")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--split", eval_split, "Which part of the data to use")
      ->check(CLI::IsMember({"all", "train", "val", "test"}));

  // synth
  DataOptions synth_data;
  std::uint64_t synth_seed = 0;
  auto* synth_cmd = app.add_subcommand("synth", "Export a synthetic dataset; writes images.idx and truth.json");
  add_data_options(synth_cmd, synth_data);
  synth_cmd->add_option("--seed", synth_seed, "Generator seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  auto pick = [](const LoadedData& d, const std::string& which) -> const Dataset& {
    if (which == "train") return d.parts.train;
    if (which == "val") return d.parts.val;
    if (which == "test") return d.parts.test;
    return d.all;
  };

  try {
    const fs::path out = prepare_out(out_dir);

    if (*train_cmd) {
      const LoadedData d = load_data(train_data, train_opts.seed);
      const MlpConfig mc = model_config(train_model, d.all.dim());
      const TrainConfig tc = train_config(train_opts);
      std::optional<VaeModel> init;
      if (!init_checkpoint.empty()) init = checkpoint_model(load_checkpoint(init_checkpoint));
      const TrainResult r = train(d.parts.train, non_empty(d.parts.val), mc, d.likelihood, tc, init);
      if (r.posterior) {
        save_checkpoint(*r.posterior, (out / "model.ckpt").string());
      } else {
        save_checkpoint(r.model, (out / "model.ckpt").string());
      }
      write_text(out / "train_log.csv", r.log.to_csv());
      std::cout << "initial train elbo/datapoint " << format_double(r.initial_train.elbo_per_datapoint)
                << "\nfinal train elbo/datapoint " << format_double(r.final_train.elbo_per_datapoint) << '\n';
    } else if (*lm_cmd) {
      const LoadedData d = load_data(lm_data, lm_opts.seed);
      SweepSpec s = sweep_spec(lm_model, lm_opts, d.all.dim(), d.likelihood);
      s.L_values = l_values;
      s.M_values = m_values;
      s.repetitions = reps;
      write_text(out / "sweep_lm.csv", sweep_lm(d.parts.train, d.parts.val, s, parallel).to_csv());
    } else if (*depth_cmd) {
      const LoadedData d = load_data(depth_data, depth_opts.seed);
      SweepSpec s = sweep_spec(depth_model, depth_opts, d.all.dim(), d.likelihood);
      s.depth_values = depths;
      write_text(out / "sweep_depth.csv", sweep_depth(d.parts.train, d.parts.val, s).to_csv());
    } else if (*cmp_cmd) {
      const LoadedData d = load_data(cmp_data, cmp_opts.seed);
      const SweepSpec s = sweep_spec(cmp_model, cmp_opts, d.all.dim(), d.likelihood);
      const EstimatorComparison c = compare_estimators(d.parts.train, d.parts.val, latents, s, draws);
      write_text(out / "compare_estimators.csv", c.to_csv());
      write_text(out / "variance_report.txt", c.variance.to_text());
      std::cout << c.variance.to_text();
    } else if (*man_cmd) {
      const VaeModel model = checkpoint_model(load_checkpoint(manifold_ckpt));
      auto [h, w] = cell_shape(model.config.input_dim, {});
      if (cell_h && cell_w) {
        h = cell_h;
        w = cell_w;
      }
      write_bytes(out / "manifold.pgm", encode_pgm(manifold_grid(model, grid_k, h, w)));
    } else if (*rec_cmd) {
      const LoadedData d = load_data(rec_data, rec_seed);
      std::vector<std::pair<std::string, VaeModel>> variants;
      for (const auto& spec : rec_ckpts) {
        const auto eq = spec.find('=');
        const std::string name = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
        const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
        variants.emplace_back(name, checkpoint_model(load_checkpoint(path)));
      }
      const DecodeMode mode = rec_decode == "mean" ? DecodeMode::posterior_mean() : DecodeMode::sampled(rec_k);
      const ReconstructionReport rep = reconstruction_report(variants, pick(d, rec_split), rec_n, mode, rec_seed);
      write_text(out / "reconstruct_mse.csv", rep.to_csv());
      for (std::size_t i = 0; i < rep.pairs.size(); ++i) {
        write_bytes(out / ("reconstruct_" + std::to_string(i) + ".pgm"), encode_pgm(rep.pairs[i]));
      }
    } else if (*eval_cmd) {
      const LoadedData d = load_data(eval_data, eval_seed);
      const VaeModel model = checkpoint_model(load_checkpoint(eval_ckpt));
      SeededRng rng(eval_seed);
      const Metrics m = evaluate(pick(d, eval_split), model, EvalConfig{eval_samples, 500}, rng);
      const std::string csv = metrics_csv(m);
      write_text(out / "eval.csv", csv);
      std::cout << csv;
    } else if (*synth_cmd) {
      if (synth_data.synthetic.empty()) throw UsageError("synth needs --synthetic");
      LoadedData d = load_data(synth_data, synth_seed);
      Dataset ds = d.synthetic->data;
      double offset = 0.0, scale = 1.0;
      if (ds.pixel_range == PixelRange::real) {
        auto [unit, affine] = normalize_unit(ds);
        ds = unit;
        offset = affine.first;
        scale = affine.second;
      }
      save_idx(ds, (out / "images.idx").string(),
               ds.labels.empty() ? std::nullopt : std::optional<std::string>((out / "labels.idx").string()));
      write_text(out / "truth.json", ground_truth_json(d.spec, *d.synthetic, offset, scale));
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const ContractError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
