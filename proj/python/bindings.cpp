// Python bindings: numpy arrays in and out, plain dicts for results.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "viso/cli.hpp"
#include "viso/orchestrator.hpp"

namespace py = pybind11;
using namespace viso;

namespace {

ViewSphere sphere(const Vec3& c, double r) {
  ViewSphere s{c, r};
  s.validate();
  return s;
}

py::dict field_dict(const FieldSample& f) {
  py::dict d;
  d["velocity"] = f.velocity;
  d["beta"] = f.beta;
  d["truncated"] = f.truncated;
  return d;
}

py::dict box_dict(const OrientedBox& b) {
  py::dict d;
  d["center"] = b.center;
  d["rotation"] = b.rotation;
  d["half_extents"] = b.half_extents;
  return d;
}

OrientedBox make_box(const Vec3& c, const Vec3& h, const std::optional<Mat3>& r) {
  OrientedBox b = OrientedBox::axis_aligned(c, h);
  if (r) b.rotation = *r;
  b.validate();
  return b;
}

GraspObservation make_obs(const Vec3& contact, const Vec3& mu, double kappa, double quality, double width,
                          std::vector<double> bins, int tick) {
  GraspObservation o;
  o.contact = contact;
  o.mu = UnitVec3(mu);
  o.kappa = kappa;
  o.quality = quality;
  o.width = width;
  o.approach_bins = std::move(bins);
  o.tick = tick;
  return o;
}

py::dict grasp_dict(const ContactGrasp& g) {
  py::dict d;
  d["id"] = g.id;
  d["contact"] = g.contact;
  d["eta"] = g.eta;
  d["mu"] = g.mu();
  d["kappa"] = g.kappa(KappaMode::kNatural);
  d["quality"] = g.quality();
  d["width"] = g.width;
  d["approach_bins"] = g.approach_bins;
  d["update_count"] = g.update_count;
  return d;
}

py::dict episode_dict(const EpisodeResult& r) {
  py::dict d;
  d["final_success"] = r.final_success;
  d["grasp_attempts"] = r.grasp_attempts;
  d["grasps_attempted"] = r.grasps_attempted;
  d["grasps_succeeded"] = r.grasps_succeeded;
  d["ticks_used"] = r.ticks_used;
  d["termination"] = r.termination;
  py::list events;
  for (const auto& e : r.events) {
    py::dict ev;
    ev["tick"] = e.tick;
    ev["kind"] = std::string(to_string(e.kind));
    ev["object_id"] = e.object_id;
    ev["label"] = e.label;
    ev["detail"] = e.detail;
    events.append(ev);
  }
  d["events"] = events;
  Eigen::MatrixX3d positions(static_cast<Eigen::Index>(r.trajectory.size()), 3);
  for (std::size_t i = 0; i < r.trajectory.size(); ++i)
    positions.row(static_cast<Eigen::Index>(i)) = r.trajectory[i].pose.position.transpose();
  d["camera_positions"] = positions;
  return d;
}

py::dict metrics_dict(const SuiteMetrics& m) {
  py::dict d;
  d["episodes"] = m.episodes;
  d["afsr"] = m.afsr;
  d["aga"] = m.aga;
  d["agsr"] = m.agsr;
  return d;
}

}  // namespace

PYBIND11_MODULE(viso_grasp, m) {
  m.doc() = "Geometric and probabilistic core of the VISO-Grasp pipeline";
  py::register_exception<Error>(m, "VisoError", PyExc_ValueError);
  py::register_exception<cli::CliError>(m, "InputError", PyExc_ValueError);

  // geometry
  m.def(
      "project",
      [](const Vec3& p, double fx, double fy, double cx, double cy) {
        const auto r = project(p, CameraIntrinsics{fx, fy, cx, cy});
        return py::make_tuple(r.u, r.v, r.depth);
      },
      py::arg("p"), py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"));
  m.def(
      "backproject",
      [](double u, double v, double depth, double fx, double fy, double cx, double cy) {
        return backproject(u, v, depth, CameraIntrinsics{fx, fy, cx, cy});
      },
      py::arg("u"), py::arg("v"), py::arg("depth"), py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"));
  m.def(
      "fit_oriented_box",
      [](const Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>& pts) {
        std::vector<Vec3> v(static_cast<std::size_t>(pts.rows()));
        for (Eigen::Index i = 0; i < pts.rows(); ++i) v[static_cast<std::size_t>(i)] = pts.row(i).transpose();
        return box_dict(fit_oriented_box(v));
      },
      py::arg("points"));

  // relations between two boxes, as seen from a (first to second)
  m.def(
      "relations",
      [](const Vec3& ca, const Vec3& ha, const Vec3& cb, const Vec3& hb, std::optional<Mat3> ra,
         std::optional<Mat3> rb) {
        SceneSnapshot s;
        s.objects.resize(2);
        s.objects[0].id = 0;
        s.objects[0].box = make_box(ca, ha, ra);
        s.objects[1].id = 1;
        s.objects[1].box = make_box(cb, hb, rb);
        const auto g = compute_relations(s, RelationConfig{});
        py::dict d;
        d["proximity"] = g.has(0, 1, Relation::kProximity);
        d["below"] = g.has(0, 1, Relation::kBelow);
        d["high"] = g.has(0, 1, Relation::kHigh);
        d["low"] = g.has(0, 1, Relation::kLow);
        return d;
      },
      py::arg("center_a"), py::arg("half_a"), py::arg("center_b"), py::arg("half_b"),
      py::arg("rotation_a") = py::none(), py::arg("rotation_b") = py::none());

  // view field
  m.def(
      "field",
      [](const Vec3& x, const Vec3& center, double radius, const Vec3& target, const std::vector<Vec3>& occluders,
         bool truncate) {
        const auto s = sphere(center, radius);
        return field_dict(truncate ? planner_field(x, s, target, occluders) : field_multi(x, s, target, occluders));
      },
      py::arg("x"), py::arg("center"), py::arg("radius"), py::arg("target"), py::arg("occluders"),
      py::arg("truncate") = false);
  m.def(
      "integrate_trajectory",
      [](const Vec3& x0, const Vec3& center, double radius, const Vec3& target, const std::vector<Vec3>& occluders,
         double step, int max_steps, double eps_stag) {
        const auto tr = integrate_trajectory(x0, sphere(center, radius), target, occluders,
                                             IntegrationParams{step, max_steps, eps_stag});
        Eigen::MatrixX3d pts(static_cast<Eigen::Index>(tr.points.size()), 3);
        for (std::size_t i = 0; i < tr.points.size(); ++i)
          pts.row(static_cast<Eigen::Index>(i)) = tr.points[i].transpose();
        py::dict d;
        d["points"] = pts;
        d["status"] = std::string(to_string(tr.status));
        d["final"] = field_dict(tr.final_sample);
        return d;
      },
      py::arg("x0"), py::arg("center"), py::arg("radius"), py::arg("target"), py::arg("occluders"),
      py::arg("step") = 0.012, py::arg("max_steps") = 2000, py::arg("eps_stag") = 1e-3);

  // von Mises-Fisher
  m.def("vmf_density", &vmf_density, py::arg("b"), py::arg("mu"), py::arg("kappa"));
  m.def(
      "sample_vmf",
      [](const Vec3& mu, double kappa, int n, std::uint64_t seed) {
        auto rng = make_rng(seed, 0);
        Eigen::MatrixX3d out(n, 3);
        for (int i = 0; i < n; ++i) out.row(i) = sample_vmf(mu.normalized(), kappa, rng).transpose();
        return out;
      },
      py::arg("mu"), py::arg("kappa"), py::arg("n"), py::arg("seed") = 0);

  // grasp fusion
  py::class_<GraspObservation>(m, "GraspObservation")
      .def(py::init(&make_obs), py::arg("contact"), py::arg("mu"), py::arg("kappa"), py::arg("quality"),
           py::arg("width") = 0.0, py::arg("approach_bins") = std::vector<double>(6, 0.0), py::arg("tick") = 0);
  py::class_<FusionEngine>(m, "FusionEngine")
      .def(py::init([] { return std::make_unique<FusionEngine>(FusionConfig{}); }))
      .def(
          "ingest",
          [](FusionEngine& e, const std::vector<GraspObservation>& obs, std::optional<int> now) { e.ingest(obs, now); },
          py::arg("observations"), py::arg("now") = py::none())
      .def("grasps",
           [](const FusionEngine& e) {
             py::list out;
             for (const auto& g : e.snapshot().buffer) out.append(grasp_dict(g));
             return out;
           })
      .def("best", [](const FusionEngine& e) -> py::object {
        const auto b = e.best();
        if (!b) return py::none();
        py::dict d;
        d["id"] = b->id;
        d["quality"] = b->quality;
        d["kappa"] = b->kappa;
        d["contact"] = b->contact;
        return d;
      });

  // episodes
  py::class_<GroundTruthScene>(m, "Scene")
      .def_property_readonly("target", [](const GroundTruthScene& s) { return s.target_label; })
      .def_property_readonly("labels", [](const GroundTruthScene& s) {
        std::vector<std::string> out;
        for (const auto& o : s.objects) out.push_back(o.description.label);
        return out;
      });
  m.def("load_scene", &cli::load_scene, py::arg("path"));
  m.def("parse_scene", &cli::parse_scene, py::arg("text"), py::arg("origin") = "<scene>");
  m.def(
      "run_episode",
      [](const GroundTruthScene& scene, std::uint64_t seed, std::optional<std::string> config) {
        const LoopConfig cfg = config ? cli::parse_config(*config) : LoopConfig{};
        EpisodeResult r;
        {
          py::gil_scoped_release nogil;
          r = run_episode(scene, cfg, seed);
        }
        return episode_dict(r);
      },
      py::arg("scene"), py::arg("seed") = 0, py::arg("config") = py::none());
  m.def(
      "run_suite",
      [](const std::vector<std::pair<std::string, GroundTruthScene>>& scenes, const std::vector<std::uint64_t>& seeds,
         int threads) {
        std::vector<NamedScene> named;
        for (const auto& [n, s] : scenes) named.push_back({n, s});
        SuiteResult r;
        {
          py::gil_scoped_release nogil;
          r = run_suite(named, LoopConfig{}, seeds, threads);
        }
        return metrics_dict(r.metrics);
      },
      py::arg("scenes"), py::arg("seeds"), py::arg("threads") = 1);
}
