#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vaelab/checkpoint.hpp"
#include "vaelab/data.hpp"
#include "vaelab/errors.hpp"
#include "vaelab/experiments.hpp"
#include "vaelab/objectives.hpp"
#include "vaelab/training.hpp"

namespace py = pybind11;
using namespace vaelab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array, got " + std::to_string(a.ndim()) + " dimensions");
  const Shape shape{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1))};
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Dataset to_dataset(const Array& a, PixelRange range) {
  Dataset ds;
  ds.x = to_tensor(a);
  ds.pixel_range = range;
  ds.name = "python";
  ds.validate();
  return ds;
}

}  // namespace

PYBIND11_MODULE(_vaelab, m) {
  m.doc() = "Variational auto-encoder toolkit.";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::enum_<Activation>(m, "Activation")
      .value("tanh", Activation::tanh)
      .value("sigmoid", Activation::sigmoid)
      .value("relu", Activation::relu);
  py::enum_<Likelihood>(m, "Likelihood").value("bernoulli", Likelihood::bernoulli).value("gaussian", Likelihood::gaussian);
  py::enum_<Estimator>(m, "Estimator").value("a", Estimator::a).value("b", Estimator::b);
  py::enum_<PixelRange>(m, "PixelRange")
      .value("unit_interval", PixelRange::unit_interval)
      .value("binary", PixelRange::binary)
      .value("real", PixelRange::real);

  py::class_<MlpConfig>(m, "MlpConfig")
      .def(py::init<>())
      .def(py::init([](std::size_t input_dim, std::vector<std::size_t> hidden_dims, std::size_t latent_dim,
                       Activation activation) {
             MlpConfig c;
             c.input_dim = input_dim;
             c.hidden_dims = std::move(hidden_dims);
             c.latent_dim = latent_dim;
             c.activation = activation;
             c.validate();
             return c;
           }),
           py::arg("input_dim"), py::arg("hidden_dims") = std::vector<std::size_t>{500}, py::arg("latent_dim") = 10,
           py::arg("activation") = Activation::tanh)
      .def_readwrite("input_dim", &MlpConfig::input_dim)
      .def_readwrite("hidden_dims", &MlpConfig::hidden_dims)
      .def_readwrite("latent_dim", &MlpConfig::latent_dim)
      .def_readwrite("activation", &MlpConfig::activation);

  py::class_<VaeModel>(m, "VaeModel")
      .def_readonly("config", &VaeModel::config)
      .def_readonly("likelihood", &VaeModel::likelihood)
      .def("parameter_ids",
           [](const VaeModel& v) {
             std::vector<std::string> ids;
             for (const auto& p : v.params) ids.push_back(p.id);
             return ids;
           })
      .def("parameter", [](const VaeModel& v, const std::string& id) { return to_array(v.params.value(id)); })
      .def("parameter_count", [](const VaeModel& v) { return v.params.scalar_count(); })
      .def("__eq__", [](const VaeModel& a, const VaeModel& b) { return a == b; });

  m.def(
      "init_model",
      [](const MlpConfig& c, Likelihood lik, std::uint64_t seed) {
        SeededRng rng(seed);
        return init_model(c, lik, rng);
      },
      py::arg("config"), py::arg("likelihood") = Likelihood::bernoulli, py::arg("seed") = 0);

  m.def(
      "synthetic",
      [](const std::string& generator, std::size_t n_points, std::uint64_t seed, std::size_t data_dim,
         std::size_t latent_dim, std::size_t image_side) {
        SyntheticSpec s;
        s.generator = parse_generator(generator);
        s.n_points = n_points;
        s.seed = seed;
        s.data_dim = data_dim;
        s.latent_dim = latent_dim;
        s.image_side = image_side;
        return to_array(generate_synthetic(s).data.x);
      },
      py::arg("generator") = "vae-ground-truth", py::arg("n_points") = 500, py::arg("seed") = 0,
      py::arg("data_dim") = 8, py::arg("latent_dim") = 2, py::arg("image_side") = 16,
      "Rows of a synthetic dataset as an [N x D] array.");

  m.def(
      "elbo",
      [](const VaeModel& model, const Array& x, Estimator est, std::size_t samples, std::uint64_t seed) {
        ObjectiveConfig cfg;
        cfg.estimator = est;
        cfg.samples = samples;
        SeededRng rng(seed);
        return elbo_estimate(model, to_tensor(x), cfg, rng).total;
      },
      py::arg("model"), py::arg("x"), py::arg("estimator") = Estimator::b, py::arg("samples") = 1,
      py::arg("seed") = 0, "One draw of the ELBO estimator summed over the rows of x.");

  m.def(
      "reconstruct",
      [](const VaeModel& model, const Array& x, std::size_t k, std::uint64_t seed) {
        SeededRng rng(seed);
        const DecodeMode mode = k == 0 ? DecodeMode::posterior_mean() : DecodeMode::sampled(k);
        return to_array(reconstruct(model, to_tensor(x), mode, rng));
      },
      py::arg("model"), py::arg("x"), py::arg("k") = 0, py::arg("seed") = 0,
      "Decoder mean at the latent posterior mean (k = 0) or averaged over k sampled latents.");

  m.def(
      "train",
      [](const Array& x, const MlpConfig& config, Likelihood lik, std::size_t epochs, std::size_t batch_size,
         std::size_t samples, Estimator est, double learning_rate, double weight_decay, std::uint64_t seed,
         std::optional<Array> val) {
        const PixelRange range = lik == Likelihood::gaussian ? PixelRange::real : PixelRange::unit_interval;
        TrainConfig tc;
        tc.epochs = epochs;
        tc.batch_size = batch_size;
        tc.samples = samples;
        tc.estimator = est;
        tc.learning_rate = learning_rate;
        tc.weight_decay = weight_decay;
        tc.seed = seed;
        const Dataset train_set = to_dataset(x, range);
        std::optional<Dataset> val_set;
        if (val) val_set = to_dataset(*val, range);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(train_set, val_set, config, lik, tc);
        }
        return py::make_tuple(r.model, r.log.to_csv());
      },
      py::arg("x"), py::arg("config"), py::arg("likelihood") = Likelihood::bernoulli, py::arg("epochs") = 10,
      py::arg("batch_size") = 100, py::arg("samples") = 1, py::arg("estimator") = Estimator::b,
      py::arg("learning_rate") = 0.01, py::arg("weight_decay") = 0.0, py::arg("seed") = 0,
      py::arg("val") = py::none(), "Returns (model, training log as CSV text).");

  m.def(
      "save_checkpoint", [](const VaeModel& model, const std::string& path) { save_checkpoint(model, path); },
      py::arg("model"), py::arg("path"));
  m.def(
      "load_checkpoint", [](const std::string& path) { return checkpoint_model(load_checkpoint(path)); },
      py::arg("path"), "The point model, or the posterior mean of a weight-posterior checkpoint.");
  m.def(
      "load_idx", [](const std::string& path) { return to_array(load_idx(path).x); }, py::arg("path"),
      "Images as an [N x rows*cols] array scaled to [0, 1].");
  m.def(
      "save_idx",
      [](const Array& x, std::size_t rows, std::size_t cols, const std::string& path) {
        Dataset ds = to_dataset(x, PixelRange::unit_interval);
        ds.item_dims = {rows, cols};
        save_idx(ds, path);
      },
      py::arg("x"), py::arg("rows"), py::arg("cols"), py::arg("path"));
}
