#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "metadet/config.hpp"
#include "metadet/eval.hpp"
#include "metadet/io.hpp"
#include "metadet/meta.hpp"
#include "metadet/synth.hpp"
#include "metadet/tracker.hpp"

namespace py = pybind11;
using namespace metadet;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int64_t> shape(a.ndim());
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = a.shape(i);
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor(shape, std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> a(shape);
    std::copy(t.data().begin(), t.data().end(), a.mutable_data());
    return a;
}

std::vector<Sample> samples_from_py(const std::vector<std::pair<py::array, BoundingBox>>& in) {
    std::vector<Sample> out;
    for (const auto& [img, box] : in)
        out.push_back({tensor_from_array(py::cast<py::array_t<double>>(img)), box});
    return out;
}

}  // namespace

PYBIND11_MODULE(_metadet, m) {
    m.doc() = "meta-learned instance detector and tracker";

    py::class_<BoundingBox>(m, "BoundingBox")
        .def(py::init<>())
        .def(py::init([](double cx, double cy, double w, double h) {
                 return BoundingBox{cx, cy, w, h};
             }),
             py::arg("cx"), py::arg("cy"), py::arg("w"), py::arg("h"))
        .def_readwrite("cx", &BoundingBox::cx)
        .def_readwrite("cy", &BoundingBox::cy)
        .def_readwrite("w", &BoundingBox::w)
        .def_readwrite("h", &BoundingBox::h)
        .def("__repr__", [](const BoundingBox& b) {
            return "BoundingBox(cx=" + std::to_string(b.cx) + ", cy=" + std::to_string(b.cy) +
                   ", w=" + std::to_string(b.w) + ", h=" + std::to_string(b.h) + ")";
        });

    m.def("iou", &iou, py::arg("a"), py::arg("b"));

    py::enum_<HeadStyle>(m, "HeadStyle")
        .value("ANCHOR", HeadStyle::kAnchorBased)
        .value("ANCHOR_FREE", HeadStyle::kAnchorFree);

    py::class_<DetectorConfig>(m, "DetectorConfig")
        .def(py::init<>())
        .def_readwrite("head_style", &DetectorConfig::head_style)
        .def_readwrite("input_size", &DetectorConfig::input_size)
        .def_readwrite("stride", &DetectorConfig::stride)
        .def_readwrite("anchor_size", &DetectorConfig::anchor_size)
        .def_readwrite("trunk_channels", &DetectorConfig::trunk_channels)
        .def_readwrite("shared_trunk", &DetectorConfig::shared_trunk)
        .def_readwrite("frozen_prefix_layers", &DetectorConfig::frozen_prefix_layers)
        .def("grid", &DetectorConfig::grid);

    py::class_<SynthConfig>(m, "SynthConfig")
        .def(py::init<>())
        .def_readwrite("canvas_size", &SynthConfig::canvas_size)
        .def_readwrite("min_object_size", &SynthConfig::min_object_size)
        .def_readwrite("max_object_size", &SynthConfig::max_object_size)
        .def_readwrite("motion_sigma", &SynthConfig::motion_sigma)
        .def_readwrite("scale_sigma", &SynthConfig::scale_sigma)
        .def_readwrite("appearance_sigma", &SynthConfig::appearance_sigma)
        .def_readwrite("distractor_count", &SynthConfig::distractor_count)
        .def_readwrite("sequence_length", &SynthConfig::sequence_length)
        .def_readwrite("seed", &SynthConfig::seed);

    py::class_<TrackerConfig>(m, "TrackerConfig")
        .def(py::init<>())
        .def_readwrite("adapt_steps", &TrackerConfig::adapt_steps)
        .def_readwrite("online_steps", &TrackerConfig::online_steps)
        .def_readwrite("update_interval", &TrackerConfig::update_interval)
        .def_readwrite("score_threshold", &TrackerConfig::score_threshold)
        .def_readwrite("psr_threshold", &TrackerConfig::psr_threshold)
        .def_readwrite("buffer_capacity", &TrackerConfig::buffer_capacity)
        .def_readwrite("add_score", &TrackerConfig::add_score)
        .def_readwrite("penalty_k", &TrackerConfig::penalty_k)
        .def_readwrite("window_influence", &TrackerConfig::window_influence)
        .def_readwrite("shape_lerp", &TrackerConfig::shape_lerp);

    py::class_<ParamSet>(m, "ParamSet")
        .def("names", &ParamSet::names)
        .def("weight",
             [](const ParamSet& p, const std::string& name) {
                 return array_from_tensor(p.at(name).weight);
             })
        .def("lr", [](const ParamSet& p, const std::string& name) {
            return array_from_tensor(p.at(name).lr);
        });

    m.def("init_detector_params", &init_detector_params, py::arg("cfg"), py::arg("alpha_init"),
          py::arg("seed"));
    m.def("save_checkpoint", &save_checkpoint, py::arg("path"), py::arg("cfg"),
          py::arg("params"));
    m.def("load_checkpoint", &load_checkpoint, py::arg("path"));

    m.def(
        "generate_sequence",
        [](const SynthConfig& cfg, int64_t instance_id) {
            Sequence seq = generate_sequence(cfg, instance_id);
            std::vector<py::array_t<double>> frames;
            for (const auto& f : seq.frames) frames.push_back(array_from_tensor(f));
            return py::make_tuple(frames, seq.gt);
        },
        py::arg("cfg"), py::arg("instance_id"));

    m.def(
        "make_support_set",
        [](const py::array_t<double>& frame, const BoundingBox& box, int64_t out_size) {
            std::vector<std::pair<py::array_t<double>, BoundingBox>> out;
            for (const auto& s : make_support_set(tensor_from_array(frame), box, out_size))
                out.emplace_back(array_from_tensor(s.image), s.box);
            return out;
        },
        py::arg("frame"), py::arg("box"), py::arg("out_size"));

    m.def(
        "adapt",
        [](const ParamSet& params, const std::vector<std::pair<py::array, BoundingBox>>& samples,
           const DetectorConfig& cfg, int64_t steps) {
            auto traj = inner_gd(params, detector_sample_loss(samples_from_py(samples), cfg),
                                 steps);
            return traj.back();
        },
        py::arg("params"), py::arg("samples"), py::arg("cfg"), py::arg("steps"),
        "k-step gradient-descent adaptation on labeled (image, box) samples");

    m.def(
        "detect",
        [](const py::array_t<double>& image, const ParamSet& params, const DetectorConfig& cfg) {
            DetectorOutput out = detector_forward(tensor_from_array(image), params, cfg);
            std::vector<std::pair<BoundingBox, double>> dets;
            for (const auto& d : decode(out.cls_map->value, out.reg_map->value, cfg))
                dets.emplace_back(d.box, d.score);
            return dets;
        },
        py::arg("image"), py::arg("params"), py::arg("cfg"));

    m.def(
        "run_tracker",
        [](const std::vector<py::array_t<double>>& frames, const BoundingBox& gt0,
           const ParamSet& params, const DetectorConfig& det, const TrackerConfig& cfg) {
            Sequence seq;
            for (const auto& f : frames) seq.frames.push_back(tensor_from_array(f));
            seq.gt.assign(seq.frames.size(), gt0);
            std::vector<std::pair<BoundingBox, double>> out;
            for (const auto& d : run_tracker(seq, params, det, cfg))
                out.emplace_back(d.box, d.score);
            return out;
        },
        py::arg("frames"), py::arg("gt0"), py::arg("params"), py::arg("det"), py::arg("cfg"),
        "track a frame stack starting from the first-frame box");

    m.def(
        "evaluate",
        [](const std::vector<BoundingBox>& pred, const std::vector<BoundingBox>& gt) {
            EvalReport r = evaluate(pred, gt);
            py::dict d;
            d["mean_iou"] = r.mean_iou;
            d["auc"] = r.auc;
            d["precision_20px"] = r.precision_20px;
            d["success"] = r.success;
            return d;
        },
        py::arg("predictions"), py::arg("gt"));

    m.def("peak_to_sidelobe", [](const py::array_t<double>& a) {
        return peak_to_sidelobe(tensor_from_array(a));
    });
}
