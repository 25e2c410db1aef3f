#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <random>
#include <string>

#include "cli.hpp"
#include "matchfree/config.hpp"
#include "matchfree/hungarian.hpp"
#include "matchfree/losses.hpp"

namespace py = pybind11;
using namespace matchfree;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a, const char* name) {
  if (a.ndim() != 2) throw ShapeError(std::string(name) + " must be 2-D");
  const auto r = static_cast<std::size_t>(a.shape(0)), c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

std::vector<Box> to_boxes(const Array& a, const char* name) {
  if (a.ndim() != 2 || a.shape(1) != 4) throw ShapeError(std::string(name) + " must have shape (n, 4)");
  std::vector<Box> out;
  const double* d = a.data();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) out.push_back({d[4 * i], d[4 * i + 1], d[4 * i + 2], d[4 * i + 3]});
  return out;
}

Box to_box(const std::array<double, 4>& v) { return Box::from_array(v); }

GroundTruthSet to_gts(const std::vector<int>& labels, const Array& boxes) {
  GroundTruthSet g{labels, to_boxes(boxes, "gt_boxes")};
  if (g.labels.size() != g.boxes.size()) throw ShapeError("gt_labels and gt_boxes differ in length");
  return g;
}

PredictionSet to_preds(const Array& logits, const Array& boxes) {
  return {to_matrix(logits, "logits"), to_boxes(boxes, "pred_boxes")};
}

Config parse_config(const std::string& text) {
  return text.empty() ? Config{} : config_from_json(nlohmann::json::parse(text));
}

py::dict metrics_dict(const EvalMetrics& m) { return py::module_::import("json").attr("loads")(m.to_json().dump()); }

// Probe parameters plus the config they were built with.
struct Probe {
  GtProbeConfig cfg;
  GtProbeParams params;
};

py::dict loss_dict(const LossOutput& out, const Gradients& g) {
  py::dict d;
  d["l_w"] = out.report.l_w;
  d["l_q"] = out.report.l_q;
  d["l_total"] = out.report.l_total;
  d["surviving"] = out.report.surviving;
  d["cost"] = to_array(out.cost.values);
  d["A"] = to_array(out.dense.values);
  d["A_hat"] = to_array(out.scg.normalized.values);
  d["grad_logits"] = to_array(g.preds.logits);
  d["grad_boxes"] = to_array(g.preds.boxes);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Match-free assignment: cost, probe, sparse correspondence, losses and matching.";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("giou", [](const std::array<double, 4>& a, const std::array<double, 4>& b) {
    return giou(to_box(a), to_box(b));
  }, py::arg("a"), py::arg("b"), "Generalized IoU of two (cx, cy, w, h) boxes.");

  m.def("iou", [](const std::array<double, 4>& a, const std::array<double, 4>& b) {
    return iou(to_box(a), to_box(b));
  }, py::arg("a"), py::arg("b"));

  m.def("cost_matrix",
        [](const std::vector<int>& labels, const Array& gt_boxes, const Array& logits, const Array& pred_boxes,
           const std::array<double, 3>& weights, bool focal) {
          const CostWeights w{weights[0], weights[1], weights[2]};
          return to_array(broadcast_cost(to_gts(labels, gt_boxes), to_preds(logits, pred_boxes), w,
                                         focal ? ClassCostMode::kFocal : ClassCostMode::kNll)
                              .values);
        },
        py::arg("gt_labels"), py::arg("gt_boxes"), py::arg("logits"), py::arg("pred_boxes"),
        py::arg("weights") = std::array<double, 3>{2.0, 5.0, 2.0}, py::arg("focal") = false);

  m.def("sparse_correspondence",
        [](const Array& a, double rho, const std::string& norm) {
          ScgConfig cfg;
          cfg.rho = rho;
          cfg.norm = parse_norm_mode(norm);
          cfg.validate();
          const ScgTrace t = sparse_correspondence(to_matrix(a, "A"), cfg);
          py::array_t<bool> mask({t.sparse.values.rows(), t.sparse.values.cols()});
          std::copy(t.sparse.mask.begin(), t.sparse.mask.end(), mask.mutable_data());
          py::dict d;
          d["A_hat"] = to_array(t.normalized.values);
          d["mask"] = mask;
          d["a_max"] = t.a_max;
          d["tau"] = t.tau;
          return d;
        },
        py::arg("A"), py::arg("rho") = 0.5, py::arg("norm") = "sum1");

  m.def("hungarian",
        [](const Array& cost, bool rectangular) {
          const Assignment a = hungarian_match(to_matrix(cost, "cost"),
                                               rectangular ? HungarianPadding::kRectangular : HungarianPadding::kSquare);
          return py::make_tuple(a.pairs, a.total_cost);
        },
        py::arg("cost"), py::arg("rectangular") = false, "Returns (pairs, total_cost).");

  py::class_<Probe>(m, "Probe")
      .def(py::init([](std::size_t num_classes, const std::string& config_json, std::uint64_t seed) {
             Probe p{parse_config(config_json).probe, {}};
             std::mt19937_64 rng(seed);
             p.params = GtProbeParams::init(num_classes, p.cfg, rng);
             return p;
           }),
           py::arg("num_classes"), py::arg("config_json") = "", py::arg("seed") = 0)
      .def_property_readonly("hidden_dim", [](const Probe& p) { return p.params.hidden_dim(); })
      .def("correspondence",
           [](const Probe& p, const std::vector<int>& labels, const Array& gt_boxes, const Array& logits,
              const Array& pred_boxes) {
             return to_array(
                 correspondence(to_gts(labels, gt_boxes), to_preds(logits, pred_boxes), p.params, p.cfg).values);
           },
           py::arg("gt_labels"), py::arg("gt_boxes"), py::arg("logits"), py::arg("pred_boxes"))
      .def("loss",
           [](const Probe& p, const std::vector<int>& labels, const Array& gt_boxes, const Array& logits,
              const Array& pred_boxes, const std::string& config_json) {
             const GroundTruthSet g = to_gts(labels, gt_boxes);
             const PredictionSet preds = to_preds(logits, pred_boxes);
             Gradients grads = Gradients::zeros_like(p.params, preds);
             const LossOutput out =
                 total_loss_forward_backward(g, preds, p.params, p.cfg, parse_config(config_json).loss_config(), &grads);
             return loss_dict(out, grads);
           },
           py::arg("gt_labels"), py::arg("gt_boxes"), py::arg("logits"), py::arg("pred_boxes"),
           py::arg("config_json") = "",
           "Forward and backward of L_total; gradients are with respect to the predictions.");

  m.def("default_config_json", [] { return config_to_json(Config{}).dump(); });

  m.def("train_and_evaluate",
        [](const std::string& config_json, const std::string& objective) {
          if (objective != "matchfree" && objective != "hungarian")
            throw ValidationError("objective must be 'matchfree' or 'hungarian'");
          const Config cfg = parse_config(config_json);
          cli::RunResult r;
          {
            py::gil_scoped_release release;
            r = cli::train_and_evaluate(cfg, objective == "matchfree" ? Objective::kMatchFree : Objective::kHungarian);
          }
          return metrics_dict(r.metrics);
        },
        py::arg("config_json") = "", py::arg("objective") = "matchfree");
}
