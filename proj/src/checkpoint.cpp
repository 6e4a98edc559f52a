#include "vaelab/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "vaelab/data.hpp"
#include "vaelab/errors.hpp"

namespace vaelab {

namespace {

constexpr char kMagic[8] = {'V', 'A', 'E', 'L', 'A', 'B', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kKindModel = 1;
constexpr std::uint32_t kKindPosterior = 2;
// Caps that keep a corrupted header from requesting absurd allocations.
constexpr std::uint32_t kMaxDepth = 64;
constexpr std::uint32_t kMaxIdLength = 256;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw FormatError(std::string("checkpoint truncated while reading ") + what, pos_);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8, "tensor values");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(bits);
  }
  std::string str(std::size_t n) {
    need(n, "parameter id");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_header(Writer& w, std::uint32_t kind, const MlpConfig& cfg, Likelihood lik, std::size_t count) {
  w.raw(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.u32(kind);
  w.u32(lik == Likelihood::bernoulli ? 0u : 1u);
  w.u32(static_cast<std::uint32_t>(cfg.activation));
  w.u32(static_cast<std::uint32_t>(cfg.input_dim));
  w.u32(static_cast<std::uint32_t>(cfg.latent_dim));
  w.u32(static_cast<std::uint32_t>(cfg.hidden_dims.size()));
  for (std::size_t h : cfg.hidden_dims) w.u32(static_cast<std::uint32_t>(h));
  w.u32(static_cast<std::uint32_t>(count));
}

void write_tensor_header(Writer& w, const std::string& id, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(id.size()));
  w.raw(id.data(), id.size());
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const VaeModel& model) {
  Writer w;
  write_header(w, kKindModel, model.config, model.likelihood, model.params.size());
  for (const auto& p : model.params) {
    write_tensor_header(w, p.id, p.value);
    for (double v : p.value.data()) w.f64(v);
  }
  return w.take();
}

std::vector<std::uint8_t> encode_checkpoint(const WeightPosterior& post) {
  Writer w;
  write_header(w, kKindPosterior, post.config, post.likelihood, post.means.size());
  for (const auto& p : post.means) {
    write_tensor_header(w, p.id, p.value);
    for (double v : p.value.data()) w.f64(v);
    for (double v : post.rhos.value(p.id).data()) w.f64(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(sizeof kMagic, "magic");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) throw FormatError("not a vaelab checkpoint", 0);
  r.str(sizeof kMagic);

  const std::size_t version_at = r.pos();
  if (r.u32("version") != kVersion) throw FormatError("unsupported checkpoint version", version_at);
  const std::size_t kind_at = r.pos();
  const std::uint32_t kind = r.u32("kind");
  if (kind != kKindModel && kind != kKindPosterior) throw FormatError("unknown checkpoint kind", kind_at);
  const std::size_t lik_at = r.pos();
  const std::uint32_t lik = r.u32("likelihood");
  if (lik > 1) throw FormatError("unknown likelihood code", lik_at);
  const std::size_t act_at = r.pos();
  const std::uint32_t act = r.u32("activation");
  if (act > 2) throw FormatError("unknown activation code", act_at);

  MlpConfig cfg;
  cfg.activation = static_cast<Activation>(act);
  cfg.input_dim = r.u32("input_dim");
  cfg.latent_dim = r.u32("latent_dim");
  const std::size_t depth_at = r.pos();
  const std::uint32_t depth = r.u32("depth");
  if (depth == 0 || depth > kMaxDepth) throw FormatError("implausible hidden depth", depth_at);
  cfg.hidden_dims.clear();
  for (std::uint32_t i = 0; i < depth; ++i) cfg.hidden_dims.push_back(r.u32("hidden_dims"));
  const Likelihood likelihood = lik == 0 ? Likelihood::bernoulli : Likelihood::gaussian;

  std::vector<std::pair<std::string, Shape>> layout;
  try {
    layout = parameter_layout(cfg, likelihood);
  } catch (const ContractError& e) {
    throw FormatError(std::string("invalid architecture: ") + e.what(), depth_at);
  }

  const std::size_t count_at = r.pos();
  if (r.u32("parameter_count") != layout.size()) {
    throw FormatError("parameter count does not match the architecture", count_at);
  }

  ParameterSet values, rhos;
  for (const auto& [expected_id, expected_shape] : layout) {
    const std::size_t entry_at = r.pos();
    const std::uint32_t id_len = r.u32("id length");
    if (id_len > kMaxIdLength) throw FormatError("parameter id too long", entry_at);
    const std::string id = r.str(id_len);
    if (id != expected_id) throw FormatError("expected parameter '" + expected_id + "', found '" + id + "'", entry_at);
    const std::size_t rank_at = r.pos();
    const std::uint32_t rank = r.u32("rank");
    if (rank != expected_shape.size()) throw FormatError("wrong rank for '" + id + "'", rank_at);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(r.u32("dims"));
    if (shape != expected_shape) throw FormatError("wrong shape for '" + id + "'", rank_at);

    const std::size_t per_entry = 8 * (kind == kKindPosterior ? 2 : 1);
    const std::size_t budget = r.remaining() / per_entry;
    if (shape[0] != 0 && shape[1] > budget / shape[0]) {
      throw FormatError("checkpoint truncated while reading tensor values", r.pos());
    }
    const std::size_t n = shape_numel(shape);
    std::vector<double> v(n);
    for (double& x : v) x = r.f64();
    values.add({id, Tensor(shape, std::move(v)), true});
    if (kind == kKindPosterior) {
      std::vector<double> rho(n);
      for (double& x : rho) x = r.f64();
      rhos.add({id, Tensor(shape, std::move(rho)), true});
    }
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint", r.pos());

  if (kind == kKindModel) return VaeModel{cfg, likelihood, std::move(values)};
  return WeightPosterior{cfg, likelihood, std::move(values), std::move(rhos)};
}

void save_checkpoint(const VaeModel& model, const std::string& path) { write_file(path, encode_checkpoint(model)); }

void save_checkpoint(const WeightPosterior& posterior, const std::string& path) {
  write_file(path, encode_checkpoint(posterior));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(read_file(path)); }

VaeModel checkpoint_model(const Checkpoint& ckpt) {
  if (const auto* m = std::get_if<VaeModel>(&ckpt)) return *m;
  return std::get<WeightPosterior>(ckpt).mean_model();
}

}  // namespace vaelab
