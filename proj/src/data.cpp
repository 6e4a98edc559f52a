#include "vaelab/data.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <nlohmann/json.hpp>
#include <numbers>
#include <numeric>

#include "vaelab/errors.hpp"

namespace vaelab {

std::string to_string(PixelRange r) {
  switch (r) {
    case PixelRange::unit_interval: return "unit_interval";
    case PixelRange::binary: return "binary";
    case PixelRange::real: return "real";
  }
  return "unknown";
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

void Dataset::validate() const {
  if (x.rank() != 2 || x.shape()[0] == 0) throw ContractError("dataset '" + name + "' must hold at least one row");
  if (!labels.empty() && labels.size() != size()) throw ContractError("dataset '" + name + "' label count mismatch");
  for (double v : x.data()) {
    const bool ok = pixel_range == PixelRange::real          ? std::isfinite(v)
                    : pixel_range == PixelRange::binary      ? (v == 0.0 || v == 1.0)
                                                             : (v >= 0.0 && v <= 1.0);
    if (!ok) {
      throw ContractError("dataset '" + name + "' value " + std::to_string(v) + " outside " + to_string(pixel_range));
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out{x.gather_rows(rows), pixel_range, name, split, item_dims, {}};
  if (!labels.empty()) {
    for (std::size_t r : rows) out.labels.push_back(labels[r]);
  }
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  std::vector<std::size_t> rows(std::min(n, size()));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return subset(rows);
}

namespace {

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint32_t be32(const char* what) {
    if (bytes_.size() - pos_ < 4) {
      throw FormatError(std::string("truncated IDX header: missing ") + what, pos_);
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + static_cast<std::size_t>(i)];
    pos_ += 4;
    return v;
  }

  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::span<const std::uint8_t> rest() const { return bytes_.subspan(pos_); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct IdxHeader {
  std::vector<std::size_t> dims;
  std::size_t payload_offset = 0;
};

IdxHeader read_idx_header(std::span<const std::uint8_t> bytes, std::uint32_t expected_magic) {
  ByteReader r(bytes);
  const std::uint32_t magic = r.be32("magic number");
  if (magic != expected_magic) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bad IDX magic 0x%08X (expected 0x%08X)", magic, expected_magic);
    throw FormatError(buf, 0);
  }
  const std::size_t ndims = magic & 0xFFu;
  IdxHeader h;
  std::size_t total = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    const std::size_t offset = r.pos();
    const std::size_t extent = r.be32("dimension size");
    if (extent != 0 && total > std::numeric_limits<std::size_t>::max() / extent) {
      throw FormatError("IDX dimension product overflows", offset);
    }
    total *= extent;
    h.dims.push_back(extent);
  }
  h.payload_offset = r.pos();
  if (r.remaining() != total) {
    throw FormatError("IDX payload has " + std::to_string(r.remaining()) + " bytes but dimensions require " +
                          std::to_string(total),
                      r.pos() + std::min(r.remaining(), total));
  }
  if (total == 0) throw FormatError("IDX file holds no items", r.pos());
  return h;
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>((v >> shift) & 0xFFu));
}

}  // namespace

Dataset parse_idx(std::span<const std::uint8_t> images, std::optional<std::span<const std::uint8_t>> labels,
                  std::string name) {
  const IdxHeader h = read_idx_header(images, kIdxImageMagic);
  const std::size_t n = h.dims[0];
  const std::size_t d = h.dims[1] * h.dims[2];
  std::vector<double> values(n * d);
  const auto payload = images.subspan(h.payload_offset);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<double>(payload[i]) / 255.0;

  Dataset ds{Tensor({n, d}, std::move(values)), PixelRange::unit_interval, std::move(name), Split::train,
             {h.dims[1], h.dims[2]}, {}};
  if (labels) {
    const IdxHeader lh = read_idx_header(*labels, kIdxLabelMagic);
    if (lh.dims[0] != n) {
      throw FormatError("label count " + std::to_string(lh.dims[0]) + " does not match image count " +
                            std::to_string(n),
                        4);
    }
    const auto lp = labels->subspan(lh.payload_offset);
    ds.labels.assign(lp.begin(), lp.end());
  }
  return ds;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

Dataset load_idx(const std::string& images_path, const std::optional<std::string>& labels_path) {
  const auto images = read_file(images_path);
  if (labels_path) {
    const auto labels = read_file(*labels_path);
    return parse_idx(images, std::span<const std::uint8_t>(labels), images_path);
  }
  return parse_idx(images, std::nullopt, images_path);
}

std::vector<std::uint8_t> encode_idx_images(const Dataset& ds) {
  if (ds.x.rank() != 2) throw ContractError("dataset has no rows");
  std::size_t rows = 1, cols = ds.dim();
  if (ds.item_dims.size() == 2 && ds.item_dims[0] * ds.item_dims[1] == ds.dim()) {
    rows = ds.item_dims[0];
    cols = ds.item_dims[1];
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + ds.x.numel());
  put_be32(out, kIdxImageMagic);
  put_be32(out, static_cast<std::uint32_t>(ds.size()));
  put_be32(out, static_cast<std::uint32_t>(rows));
  put_be32(out, static_cast<std::uint32_t>(cols));
  for (double v : ds.x.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("IDX export needs values in [0, 1]; normalize first");
    out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0)));
  }
  return out;
}

std::vector<std::uint8_t> encode_idx_labels(const Dataset& ds) {
  std::vector<std::uint8_t> out;
  put_be32(out, kIdxLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(ds.labels.size()));
  out.insert(out.end(), ds.labels.begin(), ds.labels.end());
  return out;
}

void save_idx(const Dataset& ds, const std::string& images_path, const std::optional<std::string>& labels_path) {
  write_file(images_path, encode_idx_images(ds));
  if (labels_path) write_file(*labels_path, encode_idx_labels(ds));
}

Dataset binarize(const Dataset& ds, double threshold) {
  Dataset out = ds;
  for (double& v : out.x.data()) v = v > threshold ? 1.0 : 0.0;
  out.pixel_range = PixelRange::binary;
  return out;
}

Dataset binarize(const Dataset& ds, SeededRng& rng) {
  if (ds.pixel_range == PixelRange::real) throw ContractError("stochastic binarization needs values in [0, 1]");
  Dataset out = ds;
  for (double& v : out.x.data()) v = rng.uniform() < v ? 1.0 : 0.0;
  out.pixel_range = PixelRange::binary;
  return out;
}

double LinearGaussianTruth::log_evidence(std::span<const double> x) const {
  const std::size_t dx = weight.shape()[0], dz = weight.shape()[1];
  if (x.size() != dx) throw ShapeError("log_evidence: point has wrong dimension");
  Eigen::MatrixXd w(dx, dz);
  for (std::size_t i = 0; i < dx; ++i)
    for (std::size_t j = 0; j < dz; ++j) w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = weight.at(i, j);
  Eigen::MatrixXd cov = w * w.transpose();
  cov.diagonal().array() += noise_var;
  Eigen::VectorXd r(dx);
  for (std::size_t i = 0; i < dx; ++i) r(static_cast<Eigen::Index>(i)) = x[i] - bias[i];
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw DomainError("marginal covariance is not positive definite");
  const Eigen::VectorXd y = llt.matrixL().solve(r);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * (static_cast<double>(dx) * std::log(2.0 * std::numbers::pi) + log_det + y.squaredNorm());
}

std::string to_string(SyntheticSpec::Generator g) {
  switch (g) {
    case SyntheticSpec::vae_ground_truth: return "vae-ground-truth";
    case SyntheticSpec::gaussian_mixture: return "gaussian-mixture";
    case SyntheticSpec::face_like: return "faces";
  }
  return "unknown";
}

SyntheticSpec::Generator parse_generator(const std::string& name) {
  if (name == "vae-ground-truth" || name == "vae_ground_truth") return SyntheticSpec::vae_ground_truth;
  if (name == "gaussian-mixture" || name == "gaussian_mixture") return SyntheticSpec::gaussian_mixture;
  if (name == "faces" || name == "face_like") return SyntheticSpec::face_like;
  throw ContractError("unknown synthetic generator '" + name + "'");
}

void SyntheticSpec::validate() const {
  if (n_points == 0) throw ContractError("synthetic dataset needs n_points >= 1");
  if (generator != face_like && (latent_dim == 0 || data_dim == 0)) {
    throw ContractError("synthetic dimensions must be positive");
  }
  if (generator == face_like && image_side < 8) throw ContractError("face images need a side of at least 8 pixels");
  if (pixel_noise < 0.0) throw ContractError("pixel noise must be non-negative");
  if (generator == gaussian_mixture && (clusters == 0 || clusters > 255)) {
    throw ContractError("cluster count must be in 1..255");
  }
  if (truth && (truth->weight.rank() != 2 || truth->weight.shape()[0] != data_dim ||
                truth->weight.shape()[1] != latent_dim || truth->bias.numel() != data_dim || !(truth->noise_var > 0.0))) {
    throw ContractError("ground-truth parameters do not match the synthetic spec");
  }
}

namespace {

SyntheticData linear_gaussian(const SyntheticSpec& spec) {
  SeededRng rng(spec.seed, 0);
  LinearGaussianTruth truth;
  if (spec.truth) {
    truth = *spec.truth;
  } else {
    SeededRng prng = rng.derive(1);
    truth.weight = Tensor::zeros({spec.data_dim, spec.latent_dim});
    for (double& v : truth.weight.data()) v = prng.normal();
    truth.bias = Tensor::zeros({spec.data_dim});
    for (double& v : truth.bias.data()) v = 0.5 * prng.normal();
    truth.noise_var = spec.noise_var;
  }
  const std::size_t dx = spec.data_dim, dz = spec.latent_dim;
  const double noise_sd = std::sqrt(truth.noise_var);
  std::vector<double> x(spec.n_points * dx);
  std::vector<double> z(dz);
  for (std::size_t n = 0; n < spec.n_points; ++n) {
    for (double& v : z) v = rng.normal();
    for (std::size_t i = 0; i < dx; ++i) {
      double acc = truth.bias[i];
      for (std::size_t j = 0; j < dz; ++j) acc += truth.weight.at(i, j) * z[j];
      x[n * dx + i] = acc + noise_sd * rng.normal();
    }
  }
  Dataset ds{Tensor({spec.n_points, dx}, std::move(x)), PixelRange::real, "vae-ground-truth", Split::train, {1, dx}, {}};
  return {std::move(ds), truth};
}

SyntheticData mixture(const SyntheticSpec& spec) {
  SeededRng rng(spec.seed, 0);
  SeededRng crng = rng.derive(1);
  const std::size_t dx = spec.data_dim;
  std::vector<double> centers(spec.clusters * dx);
  for (double& v : centers) v = 2.0 * crng.normal();
  std::vector<double> x(spec.n_points * dx);
  std::vector<std::uint8_t> labels(spec.n_points);
  for (std::size_t n = 0; n < spec.n_points; ++n) {
    const std::size_t k = rng.uniform_index(spec.clusters);
    labels[n] = static_cast<std::uint8_t>(k);
    for (std::size_t i = 0; i < dx; ++i) x[n * dx + i] = centers[k * dx + i] + 0.5 * rng.normal();
  }
  Dataset ds{Tensor({spec.n_points, dx}, std::move(x)), PixelRange::real, "gaussian-mixture", Split::train, {1, dx},
             std::move(labels)};
  return {std::move(ds), std::nullopt};
}

double blob(double x, double y, double cx, double cy, double sd) {
  const double dx = x - cx, dy = y - cy;
  return std::exp(-(dx * dx + dy * dy) / (2.0 * sd * sd));
}

// Latent (yaw, smile) in [-1, 1]^2: yaw turns the head from left to right
// profile, smile bends the mouth.
SyntheticData faces(const SyntheticSpec& spec) {
  SeededRng rng(spec.seed, 0);
  const std::size_t side = spec.image_side;
  const double s = static_cast<double>(side);
  std::vector<double> x(spec.n_points * side * side);
  for (std::size_t n = 0; n < spec.n_points; ++n) {
    const double yaw = 2.0 * rng.uniform() - 1.0;
    const double smile = 2.0 * rng.uniform() - 1.0;
    const double light = 0.65 + 0.2 * rng.uniform();
    const double cx = 0.5 * s + 0.12 * s * yaw;
    const double cy = 0.52 * s;
    const double rx = 0.33 * s * (1.0 - 0.25 * std::abs(yaw));
    const double ry = 0.42 * s;
    const double eye_y = cy - 0.1 * s;
    const double eye_sd = 0.045 * s;
    const double mouth_x = cx + 0.1 * s * yaw;
    const double mouth_y = cy + 0.2 * s;
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) {
        const double px = static_cast<double>(c) + 0.5, py = static_cast<double>(r) + 0.5;
        const double e = std::hypot((px - cx) / rx, (py - cy) / ry);
        double v = 0.08 + (light - 0.08) / (1.0 + std::exp(10.0 * (e - 1.0)));
        const double left = 1.0 - std::max(0.0, yaw);
        const double right = 1.0 + std::min(0.0, yaw);
        const double eyes = left * blob(px, py, cx - 0.13 * s + 0.08 * s * yaw, eye_y, eye_sd) +
                            right * blob(px, py, cx + 0.13 * s + 0.08 * s * yaw, eye_y, eye_sd);
        const double u = (px - mouth_x) / (0.16 * s);
        double mouth = 0.0;
        if (std::abs(u) <= 1.2) {
          const double arc_y = mouth_y - 0.07 * s * smile * (1.0 - u * u);
          mouth = std::exp(-(py - arc_y) * (py - arc_y) / (2.0 * 0.035 * s * 0.035 * s)) *
                  std::exp(-std::pow(std::max(0.0, std::abs(u) - 1.0), 2) * 50.0);
        }
        v -= 0.55 * eyes + 0.45 * mouth;
        v += spec.pixel_noise * rng.normal();
        x[(n * side + r) * side + c] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  Dataset ds{Tensor({spec.n_points, side * side}, std::move(x)), PixelRange::unit_interval, "faces", Split::train,
             {side, side}, {}};
  return {std::move(ds), std::nullopt};
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  switch (spec.generator) {
    case SyntheticSpec::vae_ground_truth: return linear_gaussian(spec);
    case SyntheticSpec::gaussian_mixture: return mixture(spec);
    case SyntheticSpec::face_like: return faces(spec);
  }
  throw ContractError("unknown generator");
}

std::pair<Dataset, std::pair<double, double>> normalize_unit(const Dataset& ds) {
  if (ds.pixel_range != PixelRange::real) return {ds, {0.0, 1.0}};
  const auto [lo, hi] = std::minmax_element(ds.x.data().begin(), ds.x.data().end());
  const double offset = *lo;
  const double scale = *hi > *lo ? *hi - *lo : 1.0;
  Dataset out = ds;
  for (double& v : out.x.data()) v = std::clamp((v - offset) / scale, 0.0, 1.0);
  out.pixel_range = PixelRange::unit_interval;
  return {std::move(out), {offset, scale}};
}

std::string ground_truth_json(const SyntheticSpec& spec, const SyntheticData& data, double offset, double scale) {
  nlohmann::json j;
  j["generator"] = to_string(spec.generator);
  j["seed"] = spec.seed;
  j["n_points"] = data.data.size();
  j["data_dim"] = data.data.dim();
  j["latent_dim"] = spec.generator == SyntheticSpec::face_like ? 2 : spec.latent_dim;
  j["quantization"] = {{"offset", offset}, {"scale", scale}};
  if (data.truth) {
    const auto& t = *data.truth;
    std::vector<std::vector<double>> w(t.weight.shape()[0]);
    for (std::size_t i = 0; i < w.size(); ++i)
      for (std::size_t k = 0; k < t.weight.shape()[1]; ++k) w[i].push_back(t.weight.at(i, k));
    j["weight"] = w;
    j["bias"] = t.bias.values();
    j["noise_var"] = t.noise_var;
  }
  if (spec.generator == SyntheticSpec::gaussian_mixture) j["clusters"] = spec.clusters;
  if (spec.generator == SyntheticSpec::face_like) j["pixel_noise"] = spec.pixel_noise;
  return j.dump(2) + "\n";
}

DatasetSplits split(const Dataset& ds, std::array<double, 3> fractions, std::uint64_t seed) {
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw ContractError("split fractions must lie in [0, 1]");
  }
  if (std::abs(fractions[0] + fractions[1] + fractions[2] - 1.0) > 1e-9) {
    throw ContractError("split fractions must sum to 1");
  }
  const std::size_t n = ds.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  SeededRng rng(seed, 0);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);

  const auto count = [n](double f) {
    return std::min(n, static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9)));
  };
  const std::size_t n_train = count(fractions[0]);
  const std::size_t n_val = std::min(n - n_train, count(fractions[1]));

  auto part = [&](std::size_t begin, std::size_t end, Split which) {
    std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                  order.begin() + static_cast<std::ptrdiff_t>(end));
    std::sort(rows.begin(), rows.end());
    Dataset d = ds.subset(rows);
    d.split = which;
    return d;
  };
  return {part(0, n_train, Split::train), part(n_train, n_train + n_val, Split::val),
          part(n_train + n_val, n, Split::test)};
}

}  // namespace vaelab
