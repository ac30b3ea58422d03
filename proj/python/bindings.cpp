// Python module `astar`: losses, masks, configs, sampling and experiments.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "astar/attention.hpp"
#include "astar/config.hpp"
#include "astar/experiment.hpp"
#include "astar/guidance.hpp"
#include "astar/losses.hpp"
#include "astar/masks.hpp"
#include "astar/metrics.hpp"

namespace py = pybind11;
using namespace astar;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using MaskArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const DoubleArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> to_array(const Tensor& t) {
  py::array_t<double> out(t.shape());
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::array_t<std::uint8_t> mask_array(const BinaryMask& m) {
  py::array_t<std::uint8_t> out({m.resolution, m.resolution});
  std::copy(m.cells.begin(), m.cells.end(), out.mutable_data());
  return out;
}

// (r, r, N) maps from a numpy array.
AttentionMaps maps_of(const DoubleArray& a) {
  if (a.ndim() != 3 || a.shape(0) != a.shape(1)) throw std::invalid_argument("maps must have shape (r, r, N)");
  return AttentionMaps{to_tensor(a), static_cast<std::size_t>(a.shape(0)), true};
}

// (N, r, r) masks from a numpy array; nonzero cells are inside.
std::vector<BinaryMask> masks_of(const MaskArray& a) {
  if (a.ndim() != 3 || a.shape(1) != a.shape(2)) throw std::invalid_argument("masks must have shape (N, r, r)");
  const std::size_t n = a.shape(0), r = a.shape(1);
  std::vector<BinaryMask> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    out[k].resolution = r;
    out[k].cells.resize(r * r);
    for (std::size_t p = 0; p < r * r; ++p) out[k].cells[p] = a.data()[k * r * r + p] != 0;
  }
  return out;
}

std::vector<double> flat(const DoubleArray& a) { return {a.data(), a.data() + a.size()}; }

ExperimentKind kind_of(const std::string& name) {
  if (name == "run") return ExperimentKind::Run;
  if (name == "compare") return ExperimentKind::Compare;
  if (name == "ablate") return ExperimentKind::Ablate;
  if (name == "layout") return ExperimentKind::Layout;
  throw std::invalid_argument("unknown experiment kind '" + name + "'");
}

py::dict trace_dict(const RunTrace& tr, const ConceptSet& concepts) {
  py::list steps;
  for (const auto& s : tr.steps) {
    py::dict d;
    d["t"] = s.t;
    d["seg"] = s.loss.seg_total;
    d["ret"] = s.loss.ret_total;
    d["total"] = s.loss.total;
    d["step_size"] = s.step_size;
    d["guided"] = s.guided;
    steps.append(d);
  }
  py::dict presence;
  for (std::size_t k = 0; k < concepts.size(); ++k)
    presence[py::str(concepts[k].name)] = py::make_tuple(tr.presence.present[k], tr.presence.score[k]);
  py::dict out;
  out["seed"] = tr.seed;
  out["steps"] = steps;
  out["final_latent"] = to_array(tr.final_latent);
  out["presence"] = presence;
  out["both_present"] = tr.presence.all_present();
  return out;
}

}  // namespace

PYBIND11_MODULE(astar, m) {
  m.doc() = "Attention segregation and retention guidance on a toy diffusion model";

  m.def("soft_iou", [](const DoubleArray& a, const DoubleArray& b) {
    if (a.size() != b.size()) throw std::invalid_argument("soft_iou: size mismatch");
    return soft_iou(flat(a), flat(b)).value;
  }, py::arg("a"), py::arg("b"));
  m.def("segregation_loss", [](const DoubleArray& maps) { return segregation_loss(maps_of(maps)).seg_total; },
        py::arg("maps"), "Sum of pairwise soft IoU of (r, r, N) normalized maps.");
  m.def("retention_loss", [](const DoubleArray& maps, const MaskArray& masks) {
    return retention_loss(maps_of(maps), masks_of(masks)).ret_total;
  }, py::arg("maps"), py::arg("masks"));
  m.def("normalize_maps", [](const DoubleArray& maps) {
    auto am = maps_of(maps);
    am.normalized = false;
    return to_array(normalize_maps(am).maps);
  }, py::arg("maps"));
  m.def("binarize_bbox", [](const DoubleArray& map, double tau_frac) {
    if (map.ndim() != 2 || map.shape(0) != map.shape(1)) throw std::invalid_argument("map must be square");
    return mask_array(binarize_bbox(flat(map), map.shape(0), tau_frac));
  }, py::arg("map"), py::arg("tau_frac"));
  m.def("expand_seeds", &expand_seeds, py::arg("master"), py::arg("count"));

  py::class_<RunConfig>(m, "Config")
      .def_static("load", &load_config, py::arg("path"))
      .def_static("parse", [](const std::string& text) {
        std::istringstream in(text);
        return parse_config(in, "<string>");
      }, py::arg("text"))
      .def_property_readonly("concepts", [](const RunConfig& c) { return c.scene.concepts; })
      .def_property_readonly("resolution", [](const RunConfig& c) { return c.scene.resolution; })
      .def_property_readonly("channels", [](const RunConfig& c) { return c.scene.channels; })
      .def_property_readonly("steps", [](const RunConfig& c) { return c.schedule.steps; })
      .def_readwrite("seeds", &RunConfig::seeds)
      .def_property("lambda_seg", [](const RunConfig& c) { return c.guidance.lambda_seg; },
                    [](RunConfig& c, double v) { c.guidance.lambda_seg = v; })
      .def_property("lambda_ret", [](const RunConfig& c) { return c.guidance.lambda_ret; },
                    [](RunConfig& c, double v) { c.guidance.lambda_ret = v; })
      .def("echo", &RunConfig::echo)
      .def("attention_maps", [](const RunConfig& c, const DoubleArray& latent, bool normalized) {
        const auto p = c.pipeline();
        const auto maps = compute_attention(to_tensor(latent), p.spec.concepts(), p.weights);
        return to_array(normalized ? normalize_maps(maps).maps : maps.maps);
      }, py::arg("latent"), py::arg("normalized") = true, "Per-concept (r, r, N) maps of an (r, r, c) latent.")
      .def("sample", [](const RunConfig& c, std::uint64_t seed, bool guided) {
        const auto p = c.pipeline();
        GuidanceConfig g = c.guidance;
        if (!guided) g.lambda_seg = g.lambda_ret = 0.0;
        RunTrace tr;
        {
          py::gil_scoped_release release;
          tr = run(seed, p, g);
        }
        return trace_dict(tr, p.spec.concepts());
      }, py::arg("seed"), py::arg("guided") = true);

  m.def("run_experiment", [](const std::string& kind, const std::filesystem::path& config,
                             std::optional<std::filesystem::path> out, std::optional<std::vector<std::uint64_t>> seeds,
                             std::optional<std::size_t> jobs, std::optional<std::size_t> snapshot_every,
                             std::optional<std::filesystem::path> layout, bool heatmaps) {
    ExperimentOptions opts;
    opts.output = std::move(out);
    opts.seeds = std::move(seeds);
    opts.jobs = jobs;
    opts.snapshot_every = snapshot_every;
    opts.layout_file = std::move(layout);
    opts.heatmaps = heatmaps;
    const auto k = kind_of(kind);
    if (k == ExperimentKind::Layout && !opts.layout_file) throw std::invalid_argument("layout needs a layout file");
    auto cfg = load_config(config);
    py::gil_scoped_release release;
    return run_experiment(std::move(cfg), k, opts).output_dir;
  }, py::arg("kind"), py::arg("config"), py::arg("out") = py::none(), py::arg("seeds") = py::none(),
     py::arg("jobs") = py::none(), py::arg("snapshot_every") = py::none(), py::arg("layout") = py::none(),
     py::arg("heatmaps") = true, "Runs an experiment and returns its output directory.");
}
