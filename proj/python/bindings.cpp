#include "effattn/attention.hpp"
#include "effattn/attention_module.hpp"
#include "effattn/errors.hpp"
#include "effattn/gradient.hpp"
#include "effattn/resource_model.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <algorithm>
#include <optional>
#include <string>

namespace py = pybind11;
using namespace effattn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

std::optional<Tensor> optional_tensor(const std::optional<Array>& a) {
    if (!a) return std::nullopt;
    return to_tensor(*a);
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Efficient attention, dot-product attention and their cost model.";

    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<ResourceBudgetError>(m, "ResourceBudgetError", PyExc_MemoryError);

    m.def(
        "efficient_attention",
        [](const Array& q, const Array& k, const Array& v, const std::string& norm) {
            return to_array(efficient_attention(to_tensor(q), to_tensor(k), to_tensor(v), parse_normalization(norm)));
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("norm") = "softmax");
    m.def(
        "dot_product_attention",
        [](const Array& q, const Array& k, const Array& v, const std::string& norm) {
            return to_array(
                dot_product_attention(to_tensor(q), to_tensor(k), to_tensor(v), parse_normalization(norm)));
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("norm") = "softmax");
    m.def(
        "global_context",
        [](const Array& k, const Array& v, const std::string& norm) {
            return to_array(global_context(to_tensor(k), to_tensor(v), parse_normalization(norm)));
        },
        py::arg("k"), py::arg("v"), py::arg("norm") = "softmax");
    m.def(
        "template_attention_maps",
        [](const Array& k, const std::string& norm) {
            return to_array(template_attention_maps(to_tensor(k), parse_normalization(norm)));
        },
        py::arg("k"), py::arg("norm") = "softmax");

    py::class_<ResourceEstimate>(m, "ResourceEstimate")
        .def_readonly("memory_floats", &ResourceEstimate::memory_floats)
        .def_readonly("memory_bytes", &ResourceEstimate::memory_bytes)
        .def_readonly("macc", &ResourceEstimate::macc)
        .def("__repr__", [](const ResourceEstimate& e) {
            return "ResourceEstimate(memory_floats=" + std::to_string(e.memory_floats) +
                   ", memory_bytes=" + std::to_string(e.memory_bytes) + ", macc=" + std::to_string(e.macc) + ")";
        });
    py::class_<Comparison>(m, "Comparison")
        .def_readonly("n", &Comparison::n)
        .def_readonly("d", &Comparison::d)
        .def_readonly("efficient", &Comparison::efficient)
        .def_readonly("dot_product", &Comparison::dot_product)
        .def_readonly("memory_ratio", &Comparison::memory_ratio)
        .def_readonly("computation_ratio", &Comparison::computation_ratio);

    m.def(
        "estimate",
        [](std::uint64_t n, std::uint64_t d, const std::string& mechanism, std::size_t bytes_per_scalar) {
            return estimate({n, d, parse_mechanism(mechanism)}, bytes_per_scalar);
        },
        py::arg("n"), py::arg("d"), py::arg("mechanism") = "efficient",
        py::arg("bytes_per_scalar") = kCostModelBytesPerScalar);
    m.def("compare", &compare, py::arg("n"), py::arg("d"), py::arg("bytes_per_scalar") = kCostModelBytesPerScalar);

    m.def(
        "init_weights",
        [](std::size_t d, std::size_t d_k, std::size_t d_v, std::uint64_t seed, bool reproject) {
            Rng rng(seed);
            const ModuleWeights w = init_weights(rng, d, d_k, d_v, InitScheme::Uniform, reproject);
            py::dict out;
            out["w_q"] = to_array(w.w_q);
            out["w_k"] = to_array(w.w_k);
            out["w_v"] = to_array(w.w_v);
            out["w_o"] = w.w_o ? py::object(to_array(*w.w_o)) : py::none();
            return out;
        },
        py::arg("d"), py::arg("d_k"), py::arg("d_v"), py::arg("seed") = 0, py::arg("reproject") = true);

    m.def(
        "module_forward",
        [](const Array& x, const Array& w_q, const Array& w_k, const Array& w_v, const std::optional<Array>& w_o,
           const std::string& norm, const std::string& mechanism, std::optional<std::uint64_t> budget_bytes) {
            ModuleWeights w{to_tensor(w_q), to_tensor(w_k), to_tensor(w_v), optional_tensor(w_o)};
            const AttentionConfig cfg{w.d_k(), w.d_v(), parse_normalization(norm), parse_mechanism(mechanism),
                                      w.w_o.has_value()};
            return to_array(module_forward(FeatureMap(to_tensor(x)), w, cfg, budget_bytes).tensor());
        },
        py::arg("x"), py::arg("w_q"), py::arg("w_k"), py::arg("w_v"), py::arg("w_o") = py::none(),
        py::arg("norm") = "softmax", py::arg("mechanism") = "efficient", py::arg("budget_bytes") = py::none());

    py::class_<GradCheckReport>(m, "GradCheckReport")
        .def_readonly("step", &GradCheckReport::step)
        .def_readonly("tolerance", &GradCheckReport::tolerance)
        .def_readonly("passed", &GradCheckReport::pass)
        .def_property_readonly("max_relative", &GradCheckReport::max_relative)
        .def_property_readonly("parameters", [](const GradCheckReport& r) {
            py::dict out;
            for (const auto& p : r.parameters) out[py::str(p.name)] = py::make_tuple(p.max_relative, p.max_absolute);
            return out;
        });

    m.def(
        "gradcheck",
        [](const Array& q, const Array& k, const Array& v, const Array& upstream, const std::string& mechanism,
           const std::string& norm, double tolerance, double step) {
            const QkvTriple t{to_tensor(q), to_tensor(k), to_tensor(v)};
            return check_attention_gradients(parse_mechanism(mechanism), parse_normalization(norm), t,
                                             to_tensor(upstream), tolerance, step);
        },
        py::arg("q"), py::arg("k"), py::arg("v"), py::arg("upstream"), py::arg("mechanism") = "efficient",
        py::arg("norm") = "softmax", py::arg("tolerance") = 1e-5, py::arg("step") = kDefaultFiniteDifferenceStep);
}
