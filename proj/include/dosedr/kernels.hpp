#pragma once

#include <string>

namespace dosedr {

enum class KernelKind { epanechnikov, uniform, gaussian };

//! Symmetric probability-density kernel. epanechnikov/uniform vanish
//! outside [-1, 1]; gaussian has full support.
struct KernelSpec {
    KernelKind kind = KernelKind::epanechnikov;

    double operator()(double u) const;
    //! K(0).
    double at_zero() const { return (*this)(0.0); }
    bool compact_support() const { return kind != KernelKind::gaussian; }

    //! int K(u)^2 du, closed form.
    double roughness() const;
    //! int u^2 K(u) du, closed form.
    double second_moment() const;

    static KernelSpec parse(const std::string& name);
    std::string name() const;
};

} // namespace dosedr
