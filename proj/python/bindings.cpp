#include <pybind11/pybind11.h>
#include <pybind11/numpy.h>
#include <pybind11/stl.h>

#include "pointsentinel/eval.hpp"
#include "pointsentinel/losses.hpp"
#include "pointsentinel/synth.hpp"
#include "pointsentinel/train.hpp"

namespace py = pybind11;
using namespace ps;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Image image_from_array(const FloatArray& arr) {
  PS_CHECK(arr.ndim() == 2, "image array must be 2-D [H,W]");
  Image img(static_cast<int>(arr.shape(0)), static_cast<int>(arr.shape(1)));
  std::memcpy(img.pixels.data(), arr.data(), img.pixels.size() * sizeof(float));
  return img;
}

py::array_t<float> array_from_image(const Image& img) {
  py::array_t<float> arr({img.height, img.width});
  std::memcpy(arr.mutable_data(), img.pixels.data(), img.pixels.size() * sizeof(float));
  return arr;
}

py::array_t<float> array_from_map(const nn::ActivationMap& m) {
  py::array_t<float> arr({m.h, m.w});
  std::memcpy(arr.mutable_data(), m.scores.data(), m.scores.size() * sizeof(float));
  return arr;
}

synth::SceneConfig scene_config_from_dict(const py::dict& d) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& item : d) {
    const std::string key = py::cast<std::string>(item.first);
    const py::handle v = item.second;
    if (py::isinstance<py::bool_>(v)) j[key] = py::cast<bool>(v);
    else if (py::isinstance<py::int_>(v)) j[key] = py::cast<std::int64_t>(v);
    else if (py::isinstance<py::float_>(v)) j[key] = py::cast<double>(v);
    else j[key] = py::cast<std::string>(v);
  }
  return synth::scene_config_from_json(j);
}

py::dict record_to_dict(const data::SampleRecord& r, bool has_target, bool has_distractor) {
  py::dict d;
  d["case_id"] = r.case_id;
  d["patient_id"] = r.patient_id;
  d["target_class"] = data::to_string(r.target_class);
  if (r.point) {
    d["x"] = r.point->x;
    d["y"] = r.point->y;
  } else {
    d["x"] = py::none();
    d["y"] = py::none();
  }
  d["pixel_spacing_mm"] = r.pixel_spacing_mm ? py::cast(*r.pixel_spacing_mm) : py::none();
  d["height"] = r.height;
  d["width"] = r.width;
  d["has_target"] = has_target;
  d["has_distractor"] = has_distractor;
  return d;
}

py::tuple scenes_to_python(const std::vector<synth::SyntheticScene>& scenes) {
  PS_CHECK(!scenes.empty(), "no scenes generated");
  const int h = scenes[0].image.height, w = scenes[0].image.width;
  py::array_t<float> images({static_cast<int>(scenes.size()), h, w});
  float* dst = images.mutable_data();
  py::list records;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    std::memcpy(dst + i * scenes[i].image.size(), scenes[i].image.pixels.data(),
                scenes[i].image.size() * sizeof(float));
    records.append(record_to_dict(scenes[i].record, scenes[i].has_target,
                                  scenes[i].has_distractor));
  }
  return py::make_tuple(images, records);
}

train::Dataset dataset_from_arrays(const FloatArray& images, const FloatArray& points) {
  PS_CHECK(images.ndim() == 3, "images must be [n,H,W]");
  PS_CHECK(points.ndim() == 2 && points.shape(1) == 2, "points must be [n,2]");
  PS_CHECK(images.shape(0) == points.shape(0), "images and points disagree on n");
  const int n = static_cast<int>(images.shape(0));
  const int h = static_cast<int>(images.shape(1));
  const int w = static_cast<int>(images.shape(2));
  train::Dataset set;
  set.reserve(static_cast<std::size_t>(n));
  const float* ip = images.data();
  const float* pp = points.data();
  for (int i = 0; i < n; ++i) {
    data::LoadedSample s;
    s.image = Image(h, w);
    std::memcpy(s.image.pixels.data(), ip + static_cast<std::size_t>(i) * h * w,
                static_cast<std::size_t>(h) * w * sizeof(float));
    s.record.case_id = "py" + std::to_string(i);
    s.record.patient_id = s.record.case_id;
    s.record.height = h;
    s.record.width = w;
    s.record.point = data::Point{pp[2 * i], pp[2 * i + 1]};
    set.push_back(std::move(s));
  }
  return set;
}

train::TrainConfig train_config_from_dict(const py::dict& d) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& item : d) {
    const std::string key = py::cast<std::string>(item.first);
    const py::handle v = item.second;
    if (key == "backbone") {
      nlohmann::json bj = nlohmann::json::object();
      for (const auto& b : py::cast<py::dict>(v)) {
        bj[py::cast<std::string>(b.first)] = py::cast<std::int64_t>(b.second);
      }
      j[key] = bj;
    } else if (py::isinstance<py::bool_>(v)) {
      j[key] = py::cast<bool>(v);
    } else if (py::isinstance<py::int_>(v)) {
      j[key] = py::cast<std::int64_t>(v);
    } else if (py::isinstance<py::float_>(v)) {
      j[key] = py::cast<double>(v);
    } else {
      j[key] = py::cast<std::string>(v);
    }
  }
  return train::train_config_from_json(j);
}

std::vector<float> grid_from_cell(int i, int j, int h, int w) {
  PS_CHECK(i >= 0 && i < h && j >= 0 && j < w, "target cell outside the grid");
  std::vector<float> grid(static_cast<std::size_t>(h) * w, 0.0f);
  grid[static_cast<std::size_t>(i) * w + j] = 1.0f;
  return grid;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "pointsentinel: single-point detection heads, metrics and synthetic scenes";
  m.attr("__version__") = "0.1.0";

  // Register the error hierarchy before anything can throw it.
  py::register_exception<ps::ValidationError>(m, "PsValidationError", PyExc_ValueError);
  py::register_exception<ps::IoError>(m, "PsIoError", PyExc_IOError);

  // --- synthetic scenes ---------------------------------------------------------
  m.def(
      "generate_dataset",
      [](const py::dict& config, int n, int patient_group_size) {
        return scenes_to_python(
            synth::generate_dataset(scene_config_from_dict(config), n, patient_group_size));
      },
      py::arg("config"), py::arg("n"), py::arg("patient_group_size") = 1,
      "Render n scenes; returns (images [n,H,W] float32, list of record dicts).");
  m.def(
      "make_presence_set",
      [](const py::dict& config, int n_pos, int n_neg) {
        return scenes_to_python(
            synth::make_presence_set(scene_config_from_dict(config), n_pos, n_neg));
      },
      py::arg("config"), py::arg("n_pos"), py::arg("n_neg"),
      "n_pos target scenes followed by n_neg distractor-only scenes.");

  // --- map operations -------------------------------------------------------------
  m.def(
      "spatial_softmax",
      [](const FloatArray& logits) {
        PS_CHECK(logits.ndim() == 2, "logits must be 2-D");
        ad::Graph g;
        ad::Tensor t = g.leaf({static_cast<int>(logits.shape(0)), static_cast<int>(logits.shape(1))},
                              std::span<const float>(logits.data(), static_cast<std::size_t>(logits.size())));
        ad::Tensor p = loss::spatial_softmax(t);
        py::array_t<float> out({logits.shape(0), logits.shape(1)});
        std::memcpy(out.mutable_data(), p.values().data(), p.values().size() * sizeof(float));
        return out;
      },
      py::arg("logits"), "Softmax over all spatial positions of a 2-D map.");
  m.def(
      "spatial_softmax_nll",
      [](const FloatArray& logits, std::pair<int, int> target_cell) {
        PS_CHECK(logits.ndim() == 2, "logits must be 2-D");
        const int h = static_cast<int>(logits.shape(0)), w = static_cast<int>(logits.shape(1));
        ad::Graph g;
        ad::Tensor t = g.leaf({h, w}, std::span<const float>(logits.data(),
                                                             static_cast<std::size_t>(logits.size())));
        return loss::spatial_softmax_nll(t, grid_from_cell(target_cell.first, target_cell.second, h, w))
            .scalar.item();
      },
      py::arg("logits"), py::arg("target_cell"));
  m.def(
      "balanced_bce_loss",
      [](const FloatArray& sigmoid_map, std::pair<int, int> target_cell) {
        PS_CHECK(sigmoid_map.ndim() == 2, "map must be 2-D");
        const int h = static_cast<int>(sigmoid_map.shape(0)),
                  w = static_cast<int>(sigmoid_map.shape(1));
        ad::Graph g;
        ad::Tensor t = g.leaf({h, w}, std::span<const float>(sigmoid_map.data(),
                                                             static_cast<std::size_t>(sigmoid_map.size())));
        return loss::balanced_bce_loss(t, grid_from_cell(target_cell.first, target_cell.second, h, w))
            .scalar.item();
      },
      py::arg("sigmoid_map"), py::arg("target_cell"));
  m.def(
      "mse_point_loss",
      [](std::pair<float, float> pred, std::pair<float, float> target) {
        ad::Graph g;
        ad::Tensor t = g.leaf({2}, std::vector<float>{pred.first, pred.second});
        return loss::mse_point_loss(t, target.first, target.second).scalar.item();
      },
      py::arg("pred"), py::arg("target"), "Mean-square error on normalized coordinates.");
  m.def(
      "decode_argmax",
      [](const FloatArray& scores, int stride) {
        PS_CHECK(scores.ndim() == 2, "scores must be 2-D");
        nn::ActivationMap map;
        map.h = static_cast<int>(scores.shape(0));
        map.w = static_cast<int>(scores.shape(1));
        map.output_stride = stride;
        map.scores.assign(scores.data(), scores.data() + scores.size());
        const nn::PredictedPoint p = nn::decode_argmax(map, map.h * stride, map.w * stride);
        return py::make_tuple(p.x, p.y, p.score);
      },
      py::arg("scores"), py::arg("stride"),
      "Cell-center argmax decode; returns (x, y, score) in image pixels.");
  m.def(
      "encode_target",
      [](float x, float y, int map_h, int map_w, int stride) {
        py::array_t<float> out({map_h, map_w});
        const std::vector<float> grid = nn::encode_target(x, y, map_h, map_w, stride);
        std::memcpy(out.mutable_data(), grid.data(), grid.size() * sizeof(float));
        return out;
      },
      py::arg("x"), py::arg("y"), py::arg("map_h"), py::arg("map_w"), py::arg("stride"));

  // --- metrics ----------------------------------------------------------------------
  m.def(
      "precision_curve",
      [](const std::vector<double>& errors, double delta_max, int n_thresholds) {
        const eval::PrecisionCurve c = eval::precision_curve(errors, delta_max, n_thresholds);
        py::dict d;
        d["thresholds"] = c.thresholds;
        d["fractions"] = c.fractions;
        d["auc"] = c.auc;
        d["delta_max"] = c.delta_max;
        return d;
      },
      py::arg("errors"), py::arg("delta_max"), py::arg("n_thresholds") = 151);
  m.def("precision_auc", &eval::precision_auc, py::arg("errors"), py::arg("delta_max"));
  m.def(
      "bootstrap_auc_ci",
      [](const std::vector<double>& errors, double delta_max, int n_resamples, double alpha,
         std::uint64_t seed) {
        const eval::BootstrapCI ci =
            eval::bootstrap_auc_ci(errors, delta_max, n_resamples, alpha, seed);
        py::dict d;
        d["point"] = ci.point;
        d["lo"] = ci.lo;
        d["hi"] = ci.hi;
        return d;
      },
      py::arg("errors"), py::arg("delta_max"), py::arg("n_resamples") = 1000,
      py::arg("alpha") = 0.05, py::arg("seed") = 17);
  m.def(
      "error_stats",
      [](const std::vector<double>& errors) {
        const eval::ErrorStats s = eval::error_stats(errors);
        py::dict d;
        d["mean"] = s.mean;
        d["median"] = s.median;
        d["max"] = s.max;
        d["min"] = s.min;
        d["std"] = s.std;
        d["q1"] = s.q1;
        d["q3"] = s.q3;
        return d;
      },
      py::arg("errors"));
  m.def(
      "roc_auc",
      [](const std::vector<double>& pos, const std::vector<double>& neg) {
        const eval::RocResult r = eval::roc_auc(pos, neg);
        py::dict d;
        d["auc"] = r.auc;
        d["variance"] = r.variance;
        d["n_pos"] = r.n_pos;
        d["n_neg"] = r.n_neg;
        return d;
      },
      py::arg("pos_scores"), py::arg("neg_scores"));
  m.def(
      "delong_test",
      [](const std::vector<double>& a, const std::vector<double>& b,
         const std::vector<int>& labels) {
        const eval::DelongResult r = eval::delong_test(a, b, labels);
        py::dict d;
        d["auc_a"] = r.auc_a;
        d["auc_b"] = r.auc_b;
        d["z"] = r.z;
        d["p"] = r.p_two_sided;
        return d;
      },
      py::arg("model_a_scores"), py::arg("model_b_scores"), py::arg("labels"));
  m.def(
      "mean_point_offset",
      [](const std::vector<std::pair<double, double>>& a,
         const std::vector<std::pair<double, double>>& b, std::pair<int, int> image_dims) {
        auto conv = [](const std::vector<std::pair<double, double>>& pts) {
          std::vector<data::Point> out;
          for (const auto& [x, y] : pts) {
            out.push_back(data::Point{static_cast<float>(x), static_cast<float>(y)});
          }
          return out;
        };
        return eval::mean_point_offset(conv(a), conv(b), image_dims.first, image_dims.second);
      },
      py::arg("set_a"), py::arg("set_b"), py::arg("image_dims"));

  // --- model ------------------------------------------------------------------------
  py::class_<train::Checkpoint>(m, "Model")
      .def_static(
          "train",
          [](const py::dict& config, const FloatArray& images, const FloatArray& points,
             const FloatArray& val_images, const FloatArray& val_points) {
            const train::TrainConfig cfg = train_config_from_dict(config);
            return train::train(cfg, dataset_from_arrays(images, points),
                                dataset_from_arrays(val_images, val_points));
          },
          py::arg("config"), py::arg("images"), py::arg("points"), py::arg("val_images"),
          py::arg("val_points"),
          "Train on in-memory arrays: images [n,H,W] float32, points [n,2] pixels.")
      .def_static("load", [](const std::string& path) { return train::load_checkpoint(path); },
                  py::arg("path"))
      .def("save", [](const train::Checkpoint& ck, const std::string& path) {
        train::save_checkpoint(ck, path);
      })
      .def_property_readonly(
          "head", [](const train::Checkpoint& ck) { return nn::to_string(ck.config.head); })
      .def_property_readonly("epochs_completed",
                             [](const train::Checkpoint& ck) { return ck.epochs_completed; })
      .def_property_readonly("history",
                             [](const train::Checkpoint& ck) {
                               py::list out;
                               for (const auto& e : ck.history) {
                                 py::dict d;
                                 d["epoch"] = e.epoch;
                                 d["train_loss"] = e.train_loss;
                                 d["val_precision_auc"] = e.val_precision_auc;
                                 out.append(d);
                               }
                               return out;
                             })
      .def(
          "predict",
          [](const train::Checkpoint& ck, const FloatArray& image) {
            const nn::PredictedPoint p = ck.best_model().predict(image_from_array(image));
            return py::make_tuple(p.x, p.y, p.score);
          },
          py::arg("image"), "Returns (x, y, score) in image pixels.")
      .def(
          "activation_map",
          [](const train::Checkpoint& ck, const FloatArray& image) {
            return array_from_map(ck.best_model().activation_map(image_from_array(image)));
          },
          py::arg("image"), "Post-activation score map (map heads only).");

  m.def(
      "load_pgm", [](const std::string& path) { return array_from_image(data::load_image(path)); },
      py::arg("path"));
  m.def(
      "save_pgm",
      [](const FloatArray& image, const std::string& path, int maxval) {
        data::save_image(image_from_array(image), path, maxval);
      },
      py::arg("image"), py::arg("path"), py::arg("maxval") = 65535);
}
