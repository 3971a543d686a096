#include "dosedr/kernels.hpp"

#include <cmath>

#include "dosedr/errors.hpp"

namespace dosedr {

namespace {
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}

double KernelSpec::operator()(double u) const {
    switch (kind) {
        case KernelKind::epanechnikov:
            return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
        case KernelKind::uniform:
            return std::abs(u) <= 1.0 ? 0.5 : 0.0;
        case KernelKind::gaussian:
            return kInvSqrt2Pi * std::exp(-0.5 * u * u);
    }
    return 0.0;
}

double KernelSpec::roughness() const {
    switch (kind) {
        case KernelKind::epanechnikov: return 0.6;                       // 3/5
        case KernelKind::uniform: return 0.5;                            // 1/2
        case KernelKind::gaussian: return 0.5 * kInvSqrt2Pi * std::sqrt(2.0);  // 1/(2 sqrt(pi))
    }
    return 0.0;
}

double KernelSpec::second_moment() const {
    switch (kind) {
        case KernelKind::epanechnikov: return 0.2;  // 1/5
        case KernelKind::uniform: return 1.0 / 3.0;
        case KernelKind::gaussian: return 1.0;
    }
    return 0.0;
}

KernelSpec KernelSpec::parse(const std::string& name) {
    if (name == "epanechnikov") return {KernelKind::epanechnikov};
    if (name == "uniform") return {KernelKind::uniform};
    if (name == "gaussian") return {KernelKind::gaussian};
    throw UsageError("unknown kernel '" + name + "' (expected epanechnikov|uniform|gaussian)");
}

std::string KernelSpec::name() const {
    switch (kind) {
        case KernelKind::epanechnikov: return "epanechnikov";
        case KernelKind::uniform: return "uniform";
        case KernelKind::gaussian: return "gaussian";
    }
    return "?";
}

} // namespace dosedr
