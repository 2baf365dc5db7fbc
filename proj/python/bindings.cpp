#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "tardis/choice_dynamics.hpp"
#include "tardis/error.hpp"
#include "tardis/pricing_engine.hpp"
#include "tardis/scenario_config.hpp"
#include "tardis/sim_orchestrator.hpp"
#include "tardis/traffic_model.hpp"
#include "tardis/user_choice.hpp"
#include "tardis/verify.hpp"

namespace py = pybind11;
using namespace tardis;

namespace {

TpgPeriodTraffic traffic_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& rates,
    double window_length) {
  if (rates.ndim() != 2) {
    throw py::value_error("rates must be a 2-D array (users x windows)");
  }
  const auto users = static_cast<std::size_t>(rates.shape(0));
  const auto windows = static_cast<std::size_t>(rates.shape(1));
  std::vector<double> data(rates.data(), rates.data() + users * windows);
  return TpgPeriodTraffic(users, windows, std::move(data), window_length);
}

py::array_t<std::int64_t> trace_to_array(const TraceMatrix& trace) {
  py::array_t<std::int64_t> out({trace.users(), trace.days(),
                                 trace.windows_per_day()});
  const auto data = trace.data();
  std::copy(data.begin(), data.end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Shapley-gradient slot pricing and split dynamics";

  static py::exception<Error> error(m, "TardisError", PyExc_RuntimeError);
  py::register_exception<ValidationError>(m, "ValidationError", error.ptr());
  py::register_exception<CapacityExceeded>(m, "CapacityExceeded", error.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());

  py::enum_<PercentileVariant>(m, "PercentileVariant")
      .value("Exact", PercentileVariant::Exact)
      .value("ModifiedTop", PercentileVariant::ModifiedTop)
      .value("Smoothed", PercentileVariant::Smoothed);

  py::enum_<SamplingMode>(m, "SamplingMode")
      .value("Auto", SamplingMode::Auto)
      .value("Exact", SamplingMode::Exact)
      .value("Sampled", SamplingMode::Sampled);

  py::class_<LinearScheme>(m, "LinearScheme")
      .def(py::init<double>(), py::arg("rate") = 1.0)
      .def_readwrite("rate", &LinearScheme::rate);

  py::class_<Percentile95Scheme>(m, "Percentile95Scheme")
      .def(py::init([](double rate, PercentileVariant variant, double sigma,
                       std::size_t sample_count) {
             return Percentile95Scheme{rate, variant, sigma, sample_count};
           }),
           py::arg("rate") = 1.0,
           py::arg("variant") = PercentileVariant::ModifiedTop,
           py::arg("sigma") = 0.0, py::arg("sample_count") = 1000)
      .def_readwrite("rate", &Percentile95Scheme::rate)
      .def_readwrite("variant", &Percentile95Scheme::variant)
      .def_readwrite("sigma", &Percentile95Scheme::sigma)
      .def_readwrite("sample_count", &Percentile95Scheme::sample_count);

  py::class_<CappedLinkScheme>(m, "CappedLinkScheme")
      .def(py::init([](double capacity, double free_fraction) {
             return CappedLinkScheme{capacity, free_fraction};
           }),
           py::arg("capacity") = 1.0, py::arg("free_fraction") = 0.8)
      .def_readwrite("capacity", &CappedLinkScheme::capacity)
      .def_readwrite("free_fraction", &CappedLinkScheme::free_fraction);

  m.def("percentile_95_rate",
        [](const std::vector<double>& rates) {
          return percentile_95_rate(rates);
        },
        py::arg("rates"));

  m.def("period_cost",
        [](const PricingScheme& scheme, const py::array_t<double>& rates,
           double window_length) {
          return period_cost(scheme, traffic_from_array(rates, window_length));
        },
        py::arg("scheme"), py::arg("rates"), py::arg("window_length") = 1.0);

  m.def("shapley_values",
        [](const PricingScheme& scheme, const py::array_t<double>& rates,
           std::size_t sample_count, std::uint64_t seed, SamplingMode mode,
           double window_length) {
          return shapley_values(scheme,
                                traffic_from_array(rates, window_length),
                                sample_count, seed, mode);
        },
        py::arg("scheme"), py::arg("rates"), py::arg("sample_count") = 1000,
        py::arg("seed") = 0, py::arg("mode") = SamplingMode::Auto,
        py::arg("window_length") = 1.0);

  m.def("shapley_gradient",
        [](const PricingScheme& scheme, const py::array_t<double>& rates,
           std::uint64_t seed, SamplingMode mode, std::size_t sample_count) {
          SamplingOptions options;
          options.seed = seed;
          options.mode = mode;
          options.sample_count = sample_count;
          return shapley_gradient(scheme, traffic_from_array(rates, 1.0),
                                  options);
        },
        py::arg("scheme"), py::arg("rates"), py::arg("seed") = 0,
        py::arg("mode") = SamplingMode::Auto, py::arg("sample_count") = 0);

  m.def("per_user_gradient",
        [](const PricingScheme& scheme, const py::array_t<double>& rates,
           std::size_t window, std::size_t max_users) {
          const auto r = per_user_gradient(
              scheme, traffic_from_array(rates, 1.0), window, max_users);
          return py::make_tuple(r.values, r.mean);
        },
        py::arg("scheme"), py::arg("rates"), py::arg("window"),
        py::arg("max_users") = 8);

  m.def("discrete_descent",
        [](const std::vector<double>& s, const std::vector<double>& prices) {
          const auto d = discrete_descent(s, prices);
          return py::make_tuple(d.sdot, d.norm);
        },
        py::arg("s"), py::arg("prices"));

  m.def("update_split_row",
        [](const std::vector<double>& s, const std::vector<double>& prices,
           std::size_t iteration, std::size_t horizon) {
          const StepSchedule schedule{0.1, 0.001, horizon};
          return update_split_row(s, prices, schedule, iteration).s;
        },
        py::arg("s"), py::arg("prices"), py::arg("iteration") = 0,
        py::arg("horizon") = 500);

  m.def("lyapunov_row",
        [](const std::vector<double>& x, const std::vector<double>& prices) {
          return lyapunov_row(x, prices);
        },
        py::arg("x"), py::arg("prices"));

  m.def("shift_proportion", &shift_proportion, py::arg("mu"), py::arg("r"));

  m.def("synthetic_trace",
        [](std::size_t users, std::size_t days, std::size_t windows_per_day,
           double peak_hour, double ratio, std::uint64_t seed) {
          SyntheticTraceParams p;
          p.users = users;
          p.days = days;
          p.windows_per_day = windows_per_day;
          p.diurnal_peak_hour = peak_hour;
          p.peak_to_trough_ratio = ratio;
          p.seed = seed;
          return trace_to_array(generate_synthetic_trace(p));
        },
        py::arg("users") = 100, py::arg("days") = 7,
        py::arg("windows_per_day") = 24, py::arg("peak_hour") = 20.0,
        py::arg("ratio") = 4.0, py::arg("seed") = 1);

  m.def("reduction_metric",
        [](const std::vector<double>& head, const std::vector<double>& tail) {
          return reduction_metric(head, tail);
        },
        py::arg("head"), py::arg("tail"));

  m.def("run_scenario",
        [](const std::string& json_text, std::size_t repeat) {
          const auto config = parse_config(json_text);
          RunResult r;
          {
            py::gil_scoped_release release;
            r = run(config, repeat);
          }
          py::dict out;
          out["daily_cost"] = r.daily_cost;
          out["reduction"] = r.reduction;
          out["theoretical_max"] = r.theoretical_max;
          out["head_mean"] = r.head_mean;
          out["tail_mean"] = r.tail_mean;
          out["choice_sets"] = r.choice_sets.size();
          return out;
        },
        py::arg("config_json"), py::arg("repeat") = 0);

  m.def("verify_report",
        [](std::uint64_t seed) {
          VerifyOptions options;
          options.seed = seed;
          std::ostringstream text;
          const auto report = run_verify(options);
          write_verify_report(text, report);
          return py::make_tuple(report.all_passed(), text.str());
        },
        py::arg("seed") = 1);
}
