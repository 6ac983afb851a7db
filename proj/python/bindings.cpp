#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "uhrnet/analysis.hpp"
#include "uhrnet/arch_dsl.hpp"
#include "uhrnet/presets.hpp"
#include "uhrnet/runtime.hpp"

namespace py = pybind11;
using namespace uhrnet;

namespace {

py::object json_loads(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

Shape4 to_shape(const std::vector<std::int64_t>& s) {
  if (s.size() != 4) throw Error(ErrorCode::ShapeMismatch, "shape must have four entries (N, C, H, W)");
  return Shape4{s[0], s[1], s[2], s[3]};
}

template <typename T>
py::array_t<T> to_numpy(const BasicTensor<T>& t) {
  py::array_t<T> out(std::vector<py::ssize_t>(t.dims().begin(), t.dims().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

template <typename T>
BasicTensor<T> from_numpy(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  Dims dims(a.shape(), a.shape() + a.ndim());
  return BasicTensor<T>(std::move(dims), std::vector<T>(a.data(), a.data() + a.size()));
}

const CostConvention& fitted_convention() {
  static const CostConvention conv = calibrate_default().convention;
  return conv;
}

// None or "auto" selects the calibrated convention; a dict overrides fields of
// the all-off default.
CostConvention to_convention(const py::object& spec) {
  if (spec.is_none()) return fitted_convention();
  if (py::isinstance<py::str>(spec)) {
    const auto s = spec.cast<std::string>();
    if (s == "auto") return fitted_convention();
    if (s == "none") return CostConvention{};
    throw Error(ErrorCode::InvalidConfig, "convention must be 'auto', 'none' or a dict");
  }
  CostConvention c;
  for (const auto& [k, v] : spec.cast<py::dict>()) {
    const auto key = k.cast<std::string>();
    if (key == "mac_factor") c.mac_factor = v.cast<int>();
    else if (key == "bn") c.include_bn = v.cast<bool>();
    else if (key == "relu") c.include_relu = v.cast<bool>();
    else if (key == "upsample") c.include_upsample = v.cast<bool>();
    else if (key == "head") c.include_head = v.cast<bool>();
    else if (key == "elementwise") c.include_elementwise = v.cast<bool>();
    else if (key == "num_classes") c.num_classes = v.cast<int>();
    else if (key == "unit") c.unit = v.cast<std::string>() == "binary" ? GigaUnit::Binary : GigaUnit::Decimal;
    else throw Error(ErrorCode::InvalidConfig, "unknown convention key '" + key + "'");
  }
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "U-HRNet architecture tools: notation, graphs, cost analysis and a reference runtime.";

  static py::exception<Error> error_type(m, "UhrnetError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object loc = e.location() ? py::cast(*e.location()) : py::none();
      PyErr_SetObject(error_type.ptr(), py::make_tuple(e.what(), to_string(e.code()), loc).ptr());
    }
  });

  m.def("parse_structure", [](const std::string& code) {
    const auto seq = parse_structure(code);
    py::list transitions;
    for (auto d : seq.transitions) transitions.append(d == Direction::Down ? "v" : "^");
    py::dict d;
    d["structure"] = format_structure(seq);
    d["stages"] = seq.stages;
    d["transitions"] = transitions;
    d["terminal_two_branch"] = seq.terminal_two_branch;
    d["resolution_indices"] = seq.resolution_indices();
    return d;
  });
  m.def("format_structure", [](const std::string& code) { return format_structure(parse_structure(code)); },
        "Canonical ASCII form of a structure code.");

  py::class_<LayerGraph>(m, "Graph")
      .def_readonly("name", &LayerGraph::name)
      .def_readonly("base_width", &LayerGraph::base_width)
      .def_readonly("head_channels", &LayerGraph::head_channels)
      .def_property_readonly("num_nodes", [](const LayerGraph& g) { return g.nodes.size(); })
      .def_property_readonly("shaped", &LayerGraph::shaped)
      .def_property_readonly("stage_levels",
                             [](const LayerGraph& g) {
                               std::vector<std::vector<int>> out;
                               for (const auto& s : g.stages) out.push_back(s.levels);
                               return out;
                             })
      .def_property_readonly("fusions",
                             [](const LayerGraph& g) {
                               py::list out;
                               for (const auto& f : g.fusions)
                                 out.append(py::make_tuple(f.stage, f.shortcut_stage, to_string(f.kind)));
                               return out;
                             })
      .def_property_readonly("output_shape",
                             [](const LayerGraph& g) {
                               const auto s = g.output_shape();
                               return py::make_tuple(s.n, s.c, s.h, s.w);
                             })
      .def("to_json", [](const LayerGraph& g, int indent) { return export_graph(g, indent); }, py::arg("indent") = 2)
      .def_static("from_json", [](const std::string& text) { return import_graph(text); })
      .def("__eq__", [](const LayerGraph& a, const LayerGraph& b) { return a == b; })
      .def("__repr__", [](const LayerGraph& g) {
        return "<Graph " + g.name + ", " + std::to_string(g.nodes.size()) + " nodes>";
      });

  m.def("presets", [] {
    std::vector<std::string> names;
    for (const auto& p : preset_registry()) names.push_back(p.name);
    return names;
  });
  m.def("build_preset", [](const std::string& name) { return build_preset(name); });
  m.def("build_micro", &build_micro);
  m.def(
      "build_structure",
      [](const std::string& code, int width, int blocks, bool small, const std::string& fusion) {
        NetworkConfig cfg;
        cfg.base_width = width;
        cfg.blocks_per_branch = blocks;
        cfg.small_variant = small;
        if (fusion != "A" && fusion != "B") throw Error(ErrorCode::InvalidConfig, "fusion must be 'A' or 'B'");
        cfg.fusion = fusion == "A" ? FusionKind::A : FusionKind::B;
        return build_uhrnet(parse_structure(code), cfg);
      },
      py::arg("code"), py::arg("width") = 18, py::arg("blocks") = 2, py::arg("small") = true,
      py::arg("fusion") = "B");
  m.def("infer_shapes", [](const LayerGraph& g, const std::vector<std::int64_t>& shape) {
    return infer_shapes(g, to_shape(shape));
  });

  m.def(
      "count_flops",
      [](const LayerGraph& g, const py::object& convention, bool per_node) {
        return json_loads(report_json(count_flops(g, to_convention(convention)), per_node));
      },
      py::arg("graph"), py::arg("convention") = py::none(), py::arg("per_node") = false);
  m.def("count_params", [](const LayerGraph& g) { return json_loads(report_json(count_params(g))); });
  m.def(
      "compare",
      [](const LayerGraph& a, const LayerGraph& b, const py::object& convention) {
        const auto conv = to_convention(convention);
        return json_loads(diff_json(compare(count_flops(a, conv), count_flops(b, conv))));
      },
      py::arg("a"), py::arg("b"), py::arg("convention") = py::none());
  m.def("calibrate", [] {
    const auto r = calibrate_default();
    py::list residuals;
    for (const auto& res : r.residuals) residuals.append(res.relative_error);
    py::dict d;
    d["convention"] = r.convention.describe();
    d["max_abs_error"] = r.max_abs_error;
    d["relative_errors"] = residuals;
    d["within_tolerance"] = !r.no_convention_within_tolerance;
    return d;
  });

  py::class_<WeightStore>(m, "Weights")
      .def_readonly("seed", &WeightStore::seed)
      .def("__len__", &WeightStore::size)
      .def("names",
           [](const WeightStore& w) {
             std::vector<std::string> out;
             for (const auto& e : w.entries()) out.push_back(e.name);
             return out;
           })
      .def("__getitem__",
           [](const WeightStore& w, const std::string& name) {
             const auto* t = w.find(name);
             if (!t) throw py::key_error(name);
             return to_numpy(*t);
           })
      .def("save", [](const WeightStore& w, const std::filesystem::path& p) { save_weights(w, p); })
      .def_static("load", &load_weights)
      .def("__eq__", [](const WeightStore& a, const WeightStore& b) { return a == b; });

  m.def("init_weights", &init_weights, py::arg("graph"), py::arg("seed") = 0);
  m.def(
      "random_input",
      [](const std::vector<std::int64_t>& shape, std::uint64_t seed) { return to_numpy(random_input(to_shape(shape), seed)); },
      py::arg("shape"), py::arg("seed") = 0);
  m.def("forward", [](const LayerGraph& g, const WeightStore& w, const py::array& x) -> py::object {
    if (x.dtype().is(py::dtype::of<double>()))
      return to_numpy(forward(g, w, from_numpy<double>(x.cast<py::array_t<double>>())));
    return to_numpy(forward(g, w, from_numpy<float>(x.cast<py::array_t<float, py::array::forcecast>>())));
  });
  m.def(
      "gradcheck",
      [](const LayerGraph& g, const WeightStore& w, const py::array_t<float, py::array::c_style | py::array::forcecast>& x,
         double eps, double tol, std::size_t samples, std::uint64_t seed, bool adaptive) {
        GradCheckOptions opt;
        opt.eps = eps;
        opt.tolerance = tol;
        opt.samples = samples;
        opt.seed = seed;
        opt.adaptive_step = adaptive;
        GradCheckReport r;
        {
          py::gil_scoped_release release;
          r = gradcheck(g, w, from_numpy<float>(x), opt);
        }
        return json_loads(report_json(r));
      },
      py::arg("graph"), py::arg("weights"), py::arg("input"), py::arg("eps") = 1e-4, py::arg("tol") = 1e-5,
      py::arg("samples") = 20, py::arg("seed") = 0, py::arg("adaptive_step") = false);
}
