#include <algorithm>
#include <cstring>
#include <optional>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "egocorr/affinity.hpp"
#include "egocorr/analysis.hpp"
#include "egocorr/config.hpp"
#include "egocorr/error.hpp"
#include "egocorr/evalsynth.hpp"
#include "egocorr/mapping.hpp"
#include "egocorr/pruning.hpp"
#include "egocorr/targetness.hpp"

namespace py = pybind11;
using namespace egocorr;

namespace {

using DArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<Vec2> to_pattern(const DArray& a) {
  if (a.ndim() != 2 || a.shape(1) != 2) throw py::value_error("expected an (n, 2) array");
  auto r = a.unchecked<2>();
  std::vector<Vec2> out(static_cast<std::size_t>(r.shape(0)));
  for (py::ssize_t i = 0; i < r.shape(0); ++i) out[static_cast<std::size_t>(i)] = {r(i, 0), r(i, 1)};
  return out;
}

std::vector<MotionSample> to_samples(const DArray& a) {
  const auto p = to_pattern(a);
  std::vector<MotionSample> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = {static_cast<float>(p[i].u), static_cast<float>(p[i].v)};
  return out;
}

DArray from_pattern(const std::vector<Vec2>& p) {
  DArray out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(p.size()), 2});
  auto w = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < p.size(); ++i) {
    w(static_cast<py::ssize_t>(i), 0) = p[i].u;
    w(static_cast<py::ssize_t>(i), 1) = p[i].v;
  }
  return out;
}

DArray from_vector(const std::vector<double>& v) {
  DArray out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::dict scores_dict(const ScoringResult& r) {
  std::vector<double> ub, c, lik, pri, post;
  std::vector<bool> evaluated;
  for (const auto& s : r.scores) {
    ub.push_back(s.upper_bound);
    c.push_back(s.correlation);
    lik.push_back(s.likelihood);
    pri.push_back(s.prior);
    post.push_back(s.posterior);
    evaluated.push_back(s.evaluated);
  }
  py::dict d;
  d["upper_bound"] = from_vector(ub);
  d["correlation"] = from_vector(c);
  d["likelihood"] = from_vector(lik);
  d["prior"] = from_vector(pri);
  d["posterior"] = from_vector(post);
  d["evaluated"] = py::array(py::cast(evaluated));
  d["exact_evaluations"] = r.exact_evaluations;
  d["step1_multiply_adds"] = r.step1_multiply_adds;
  return d;
}

}  // namespace

PYBIND11_MODULE(_egocorr, m) {
  m.doc() = "Egocentric target search by ego-motion correlation";
  m.attr("__version__") = EGOCORR_VERSION;

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());

  py::class_<PipelineConfig>(m, "Config")
      .def(py::init<>())
      .def_readwrite("process_width", &PipelineConfig::process_width)
      .def_readwrite("process_height", &PipelineConfig::process_height)
      .def_readwrite("sample_step_e_w", &PipelineConfig::sample_step_e_w)
      .def_readwrite("gftt_min_eigenvalue", &PipelineConfig::gftt_min_eigenvalue)
      .def_readwrite("resample_interval", &PipelineConfig::resample_interval)
      .def_readwrite("l_min", &PipelineConfig::l_min)
      .def_readwrite("l_max", &PipelineConfig::l_max)
      .def_readwrite("paa_pieces_k", &PipelineConfig::paa_pieces_k)
      .def_readwrite("top_percent_p", &PipelineConfig::top_percent_p)
      .def_readwrite("median_window", &PipelineConfig::median_window)
      .def_readwrite("ransac_threshold", &PipelineConfig::ransac_threshold)
      .def_readwrite("ransac_iterations", &PipelineConfig::ransac_iterations)
      .def_readwrite("mask_threshold", &PipelineConfig::mask_threshold)
      .def_property_readonly("radius_r", &PipelineConfig::radius_r)
      .def("validate", [](const PipelineConfig& c) { validate(c); })
      .def("set", [](PipelineConfig& c, const std::string& a) { apply_override(c, a); }, py::arg("assignment"))
      .def("format", [](const PipelineConfig& c) { return format_config(c); })
      .def_static("parse", [](const std::string& text) { return parse_config(text); }, py::arg("text"))
      .def_static("load", [](const std::filesystem::path& p) { return load_config(p); }, py::arg("path"))
      .def(py::self == py::self);

  py::class_<VideoAnalysis>(m, "Analysis")
      .def_static("load", &load_analysis, py::arg("directory"))
      .def("save", [](const VideoAnalysis& a, const std::filesystem::path& d) { save_analysis(a, d); },
           py::arg("directory"))
      .def_property_readonly("source_id", [](const VideoAnalysis& a) { return a.manifest.source_id; })
      .def_property_readonly("frame_count", [](const VideoAnalysis& a) { return a.manifest.frame_count; })
      .def_property_readonly("width", [](const VideoAnalysis& a) { return a.manifest.width; })
      .def_property_readonly("height", [](const VideoAnalysis& a) { return a.manifest.height; })
      .def_property_readonly("global_pattern", [](const VideoAnalysis& a) { return from_pattern(a.global.vectors); })
      .def_property_readonly("global_filtered", [](const VideoAnalysis& a) { return from_pattern(a.global_filtered); })
      .def_property_readonly("candidate_count", [](const VideoAnalysis& a) { return a.candidates.size(); })
      .def_property_readonly("begins",
                             [](const VideoAnalysis& a) {
                               std::vector<int> b;
                               for (const auto& c : a.candidates) b.push_back(c.begin_frame);
                               return b;
                             })
      .def_property_readonly("lengths",
                             [](const VideoAnalysis& a) {
                               std::vector<int> l;
                               for (const auto& c : a.candidates) l.push_back(c.length());
                               return l;
                             })
      .def(
          "trajectory",
          [](const VideoAnalysis& a, std::size_t i) {
            if (i >= a.candidates.size()) throw py::index_error("candidate index out of range");
            const auto& c = a.candidates[i];
            std::vector<Vec2> pts, loc;
            for (const auto& p : c.points) pts.push_back({p.x, p.y});
            for (const auto& s : c.local_motion) loc.push_back({s.u, s.v});
            py::dict d;
            d["begin"] = c.begin_frame;
            d["points"] = from_pattern(pts);
            d["local_motion"] = from_pattern(loc);
            d["features"] = c.features.to_array();
            return d;
          },
          py::arg("index"));

  m.def(
      "analyze",
      [](const std::filesystem::path& frames, const std::string& pattern, const PipelineConfig& config, int jobs) {
        const DirectorySource src(frames, pattern, config);
        AnalyzeOptions options;
        options.jobs = jobs;
        py::gil_scoped_release release;
        return analyze_video(src, config, options);
      },
      py::arg("frames_dir"), py::arg("pattern") = std::string(kDefaultFramePattern),
      py::arg("config") = PipelineConfig{}, py::arg("jobs") = 1);

  m.def(
      "score",
      [](const VideoAnalysis& observer, const DArray& query_global, const PipelineConfig& config, bool two_step,
         std::optional<std::filesystem::path> prior_path, int jobs) {
        const auto global = to_pattern(query_global);
        std::optional<PriorModel> prior;
        if (prior_path) prior = load_prior(*prior_path);
        ScoringResult r;
        {
          py::gil_scoped_release release;
          r = score_observer(observer, global, config, {two_step, prior ? &*prior : nullptr, jobs});
        }
        return scores_dict(r);
      },
      py::arg("observer"), py::arg("query_global"), py::arg("config") = PipelineConfig{}, py::arg("two_step") = false,
      py::arg("prior") = py::none(), py::arg("jobs") = 1);

  m.def(
      "build_map",
      [](const VideoAnalysis& observer, const std::vector<double>& scores, int t, const PipelineConfig& config) {
        if (scores.size() != observer.candidates.size()) throw py::value_error("one score per candidate expected");
        const cv::Mat map =
            build_map(t, observer.manifest.width, observer.manifest.height, observer.candidates, scores,
                      config.radius_r());
        DArray out(std::vector<py::ssize_t>{map.rows, map.cols});
        std::memcpy(out.mutable_data(), map.ptr<double>(), sizeof(double) * map.total());
        return out;
      },
      py::arg("observer"), py::arg("scores"), py::arg("frame"), py::arg("config") = PipelineConfig{});

  m.def(
      "pixel_auc",
      [](const std::vector<double>& scores, const std::vector<std::uint8_t>& labels) {
        if (scores.size() != labels.size()) throw py::value_error("scores and labels differ in length");
        return pixel_auc(scores, labels);
      },
      py::arg("scores"), py::arg("labels"));

  m.def(
      "zncc",
      [](const DArray& local, const DArray& global, int begin) {
        const auto l = to_samples(local);
        return zncc(crop_and_normalize(l, to_pattern(global), begin, static_cast<int>(l.size())));
      },
      py::arg("local"), py::arg("global_pattern"), py::arg("begin") = 0);

  m.def(
      "upper_bound",
      [](const DArray& local, const DArray& global, int begin, int pieces_k) {
        const auto l = to_samples(local);
        const auto ls = sketch_local(l, pieces_k);
        if (!ls.present()) throw py::value_error("trajectory shorter than K");
        return upper_bound(ls, sketch_global(to_pattern(global), begin, ls.trimmed_length, pieces_k));
      },
      py::arg("local"), py::arg("global_pattern"), py::arg("begin"), py::arg("pieces_k"));

  m.def(
      "paa",
      [](const std::vector<double>& channel, int pieces_k) {
        const auto p = paa(channel, pieces_k);
        py::dict d;
        d["pieces"] = from_vector(p.pieces);
        d["variance"] = p.variance;
        d["trimmed_length"] = p.trimmed_length;
        d["degenerate"] = p.degenerate;
        return d;
      },
      py::arg("channel"), py::arg("pieces_k"));

  m.def(
      "median_filter",
      [](const DArray& pattern, int window) { return from_pattern(median_filter_pattern(to_pattern(pattern), window)); },
      py::arg("pattern"), py::arg("window"));

  m.def(
      "affinity_propagation",
      [](const DArray& s, double damping, int max_iter, std::optional<double> preference) {
        if (s.ndim() != 2 || s.shape(0) != s.shape(1)) throw py::value_error("expected a square matrix");
        ApOptions o;
        o.damping = damping;
        o.max_iter = max_iter;
        if (preference) {
          o.use_median_preference = false;
          o.preference = *preference;
        }
        const auto n = static_cast<std::size_t>(s.shape(0));
        const auto r = affinity_propagation(std::span<const double>(s.data(), n * n), n, o);
        py::dict d;
        d["exemplars"] = r.exemplars;
        d["labels"] = r.assignment;
        d["iterations"] = r.iterations;
        d["converged"] = r.converged;
        return d;
      },
      py::arg("similarity"), py::arg("damping") = 0.5, py::arg("max_iter") = 1000,
      py::arg("preference") = py::none());

  m.def(
      "clustering_metrics",
      [](const std::vector<int>& predicted, const std::vector<int>& truth) {
        std::vector<int> sorted = predicted;
        std::sort(sorted.begin(), sorted.end());
        const auto groups = static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
        const auto c = clustering_metrics(predicted, truth, groups);
        py::dict d;
        d["precision"] = c.precision;
        d["recall"] = c.recall;
        d["f_measure"] = c.f_measure;
        d["group_count"] = c.group_count;
        return d;
      },
      py::arg("predicted"), py::arg("truth"));

  m.def(
      "synthesize",
      [](const std::string& spec_json, const std::filesystem::path& out, const PipelineConfig& config) {
        const SynthSpec spec = spec_from_json(nlohmann::json::parse(spec_json));
        py::gil_scoped_release release;
        write_session(generate(spec, config), out);
      },
      py::arg("spec_json"), py::arg("out_dir"), py::arg("config") = PipelineConfig{});

  m.def(
      "benchmark",
      [](const std::filesystem::path& dir, const std::string& variant, const PipelineConfig& config, int jobs,
         std::optional<std::filesystem::path> prior_path) {
        const Variant v = parse_variant(variant);
        std::optional<PriorModel> prior;
        if (prior_path) prior = load_prior(*prior_path);
        if (v.kind == VariantKind::kCG && !prior) throw py::value_error("C+G needs a prior");
        std::string report;
        {
          py::gil_scoped_release release;
          const auto session = disk_bench_session(dir, config);
          const auto analysis = analyze_session(*session, config, jobs);
          report = report_to_json(evaluate_variant(*session, analysis, config, v, prior ? &*prior : nullptr, jobs))
                       .dump();
        }
        return report;
      },
      py::arg("session_dir"), py::arg("variant") = "C", py::arg("config") = PipelineConfig{}, py::arg("jobs") = 1,
      py::arg("prior") = py::none());
}
