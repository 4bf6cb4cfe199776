#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "aerolabel/config.hpp"
#include "aerolabel/densecrf.hpp"
#include "aerolabel/eval.hpp"
#include "aerolabel/geotiff.hpp"
#include "aerolabel/masks.hpp"
#include "aerolabel/pipeline.hpp"
#include "aerolabel/refine.hpp"
#include "aerolabel/superpixel.hpp"
#include "aerolabel/tuning.hpp"

namespace py = pybind11;
using namespace aerolabel;

namespace {

template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
Image<T> to_image(const Array<T>& a) {
  if (a.ndim() != 2) throw DataError("expected a 2-D array");
  Image<T> img(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.data.begin());
  return img;
}

template <typename T>
py::array_t<T> to_array(const Image<T>& img) {
  py::array_t<T> out({img.height, img.width});
  std::copy(img.data.begin(), img.data.end(), out.mutable_data());
  return out;
}

SampleType parse_sample_type(const std::string& s) {
  for (SampleType t : {SampleType::UInt8, SampleType::UInt16, SampleType::Int16, SampleType::Float32})
    if (to_string(t) == s) return t;
  throw ConfigError("sample type must be uint8, uint16, int16 or float32, got '" + s + "'");
}

Raster make_raster(const Array<double>& values, const std::array<double, 6>& transform, int epsg,
                   std::optional<double> nodata, const std::string& sample_type, bool categorical) {
  if (values.ndim() != 2 && values.ndim() != 3) throw DataError("raster array must be (rows, cols) or (bands, rows, cols)");
  const bool flat = values.ndim() == 2;
  Raster r;
  r.bands = flat ? 1 : static_cast<int>(values.shape(0));
  r.height = static_cast<int>(values.shape(flat ? 0 : 1));
  r.width = static_cast<int>(values.shape(flat ? 1 : 2));
  r.data.assign(values.data(), values.data() + values.size());
  r.transform = {transform[0], transform[3], transform[1], transform[5], transform[2], transform[4]};
  r.crs = epsg == 0 ? Crs::local() : Crs::from_epsg(epsg);
  r.nodata = nodata;
  r.sample_type = parse_sample_type(sample_type);
  r.kind = categorical ? RasterKind::Categorical : RasterKind::Continuous;
  validate(r);
  return r;
}

py::array_t<double> raster_array(const Raster& r) {
  py::array_t<double> out({r.bands, r.height, r.width});
  std::copy(r.data.begin(), r.data.end(), out.mutable_data());
  return out;
}

Fallback parse_fallback(const std::string& s) {
  if (s == "keep_projected") return Fallback::KeepProjected;
  if (s == "unlabeled") return Fallback::Unlabeled;
  throw ConfigError("fallback must be keep_projected or unlabeled");
}

py::dict command_dict(const CommandResult& r) {
  py::dict d;
  d["command"] = r.command;
  d["directory"] = r.directory;
  d["stage_key"] = r.stage_key;
  d["cached"] = r.cached;
  d["outputs"] = r.outputs;
  return d;
}

}  // namespace

PYBIND11_MODULE(_aerolabel, m) {
  m.doc() = "Aerial frame labeling from georeferenced land cover";
  m.attr("__version__") = version();

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<Raster>(m, "Raster")
      .def(py::init(&make_raster), py::arg("values"), py::arg("transform") = std::array<double, 6>{0, 1, 0, 0, 0, -1},
           py::arg("epsg") = 0, py::arg("nodata") = std::nullopt, py::arg("sample_type") = "float32",
           py::arg("categorical") = false,
           "transform is GDAL order (origin_x, pixel_width, row_rotation, origin_y, col_rotation, pixel_height)")
      .def_readonly("bands", &Raster::bands)
      .def_readonly("height", &Raster::height)
      .def_readonly("width", &Raster::width)
      .def_readonly("nodata", &Raster::nodata)
      .def_property_readonly("sample_type", [](const Raster& r) { return to_string(r.sample_type); })
      .def_property_readonly("categorical", [](const Raster& r) { return r.kind == RasterKind::Categorical; })
      .def_property_readonly("epsg", [](const Raster& r) { return r.crs.epsg(); })
      .def_property_readonly("transform",
                             [](const Raster& r) {
                               const GeoTransform& g = r.transform;
                               return py::make_tuple(g.origin_x, g.pixel_width, g.row_rotation, g.origin_y,
                                                     g.col_rotation, g.pixel_height);
                             })
      .def_property_readonly("values", &raster_array, "Copy of the samples as (bands, rows, cols) float64")
      .def("__eq__", [](const Raster& a, const Raster& b) { return a == b; })
      .def("__repr__", [](const Raster& r) {
        return "<Raster " + std::to_string(r.bands) + "x" + std::to_string(r.height) + "x" + std::to_string(r.width) +
               " " + to_string(r.sample_type) + " " + r.crs.to_string() + ">";
      });

  m.def("read_raster", &read_raster, py::arg("path"), "GeoTIFF or ENVI-style header/binary pair");
  m.def("write_raster", &write_raster, py::arg("raster"), py::arg("path"));
  m.def("argmax_bands", &argmax_bands, py::arg("raster"));

  py::class_<CrfParams>(m, "CrfParams")
      .def(py::init([](double w1, double w2, double theta_alpha, double theta_gamma, std::vector<double> theta_beta,
                       int iterations, bool normalize) {
             CrfParams p;
             p.w1 = w1;
             p.w2 = w2;
             p.theta_alpha = theta_alpha;
             p.theta_gamma = theta_gamma;
             p.theta_beta = std::move(theta_beta);
             p.num_iterations = iterations;
             p.normalization = normalize ? KernelNormalization::Symmetric : KernelNormalization::None;
             return p;
           }),
           py::arg("w1") = 10.0, py::arg("w2") = 3.0, py::arg("theta_alpha") = 80.0, py::arg("theta_gamma") = 3.0,
           py::arg("theta_beta") = std::vector<double>{}, py::arg("iterations") = 5, py::arg("normalize") = true)
      .def_readwrite("w1", &CrfParams::w1)
      .def_readwrite("w2", &CrfParams::w2)
      .def_readwrite("theta_alpha", &CrfParams::theta_alpha)
      .def_readwrite("theta_gamma", &CrfParams::theta_gamma)
      .def_readwrite("theta_beta", &CrfParams::theta_beta)
      .def_readwrite("iterations", &CrfParams::num_iterations);

  m.def(
      "refine_lulc",
      [](const Raster& logits, const Raster& image, const CrfParams& params, bool exact, bool standardize,
         int workers) {
        RefineLulcOptions o;
        o.inference.mode = exact ? InferenceMode::Exact : InferenceMode::Lattice;
        o.inference.workers = workers;
        o.standardize = standardize;
        py::gil_scoped_release release;
        LulcRefinement r = refine_lulc_marginals(logits, image, params, o);
        return std::make_pair(std::move(r.labels), std::move(r.log_marginals));
      },
      py::arg("logits"), py::arg("image"), py::arg("params"), py::arg("exact") = false, py::arg("standardize") = true,
      py::arg("workers") = 1, "Returns (labels, log_marginals) on the image grid");
  m.def("upsample_argmax", &upsample_argmax, py::arg("logits"), py::arg("image"), py::arg("workers") = 1);

  py::class_<MaskSet>(m, "MaskSet")
      .def_static("from_segments", [](const Array<std::int32_t>& s) { return masks_from_segments(to_image(s)); })
      .def_static("from_json", &masks_from_json)
      .def_static("load", &load_masks)
      .def("to_json", &masks_to_json)
      .def("save", [](const MaskSet& s, const std::filesystem::path& p) { save_masks(p, s); })
      .def_readonly("width", &MaskSet::width)
      .def_readonly("height", &MaskSet::height)
      .def("__len__", [](const MaskSet& s) { return s.masks.size(); })
      .def("mask", [](const MaskSet& s, std::size_t i) {
        if (i >= s.masks.size()) throw py::index_error();
        return to_array(rle_decode(s.masks[i].counts, s.width, s.height));
      });

  m.def("rle_encode", [](const Array<std::uint8_t>& b) { return rle_encode(to_image(b)); }, py::arg("binary"));
  m.def("rle_decode", [](const std::vector<std::uint32_t>& c, int w, int h) { return to_array(rle_decode(c, w, h)); },
        py::arg("counts"), py::arg("width"), py::arg("height"));

  m.def(
      "slic",
      [](const Array<std::uint8_t>& img, int n_segments, double compactness, int iterations) {
        return to_array(slic_segments(to_image(img), {n_segments, compactness, iterations}));
      },
      py::arg("image"), py::arg("n_segments") = 100, py::arg("compactness") = 10.0, py::arg("iterations") = 10);
  m.def(
      "felzenszwalb",
      [](const Array<std::uint8_t>& img, double scale, double sigma, int min_size) {
        return to_array(felzenszwalb_segments(to_image(img), {scale, sigma, min_size}));
      },
      py::arg("image"), py::arg("scale") = 1e4, py::arg("sigma") = 0.8, py::arg("min_size") = 20);

  m.def(
      "refine",
      [](const Array<std::uint16_t>& projected, const MaskSet& masks, const std::string& fallback) {
        return to_array(refine(to_image(projected), masks, parse_fallback(fallback)));
      },
      py::arg("projected"), py::arg("masks"), py::arg("fallback") = "keep_projected");

  m.def(
      "miou",
      [](const Array<std::uint16_t>& pred, const Array<std::uint16_t>& truth, int num_classes) {
        ConfusionMatrix cm(num_classes);
        cm.accumulate(to_image(pred), to_image(truth));
        const MiouResult r = miou(cm);
        return std::make_pair(r.miou, r.per_class);
      },
      py::arg("pred"), py::arg("truth"), py::arg("num_classes"),
      "Returns (miou, per_class); classes with an empty union are None");
  m.def(
      "boundary_loss",
      [](const Array<std::uint16_t>& pred, const Array<std::uint16_t>& truth, int theta0, int theta) {
        return boundary_loss(to_image(pred), to_image(truth), {theta0, theta});
      },
      py::arg("pred"), py::arg("truth"), py::arg("theta0") = 3, py::arg("theta") = 5);

  m.def("command_names", &command_names);
  m.def(
      "resolved_config",
      [](const std::filesystem::path& path, const std::vector<std::string>& overrides) {
        return config_to_json(load_config(path, overrides, aerolabel_environment()));
      },
      py::arg("config"), py::arg("overrides") = std::vector<std::string>{});
  m.def(
      "run_command",
      [](const std::string& command, const std::filesystem::path& path, const std::vector<std::string>& overrides,
         bool force) {
        const PipelineConfig c = load_config(path, overrides, aerolabel_environment());
        RunOptions o;
        o.force = force;
        CommandResult r;
        {
          py::gil_scoped_release release;
          r = run_command(command, c, o);
        }
        return command_dict(r);
      },
      py::arg("command"), py::arg("config"), py::arg("overrides") = std::vector<std::string>{},
      py::arg("force") = false, "Runs one pipeline stage; returns command, directory, stage_key, cached, outputs");
}
