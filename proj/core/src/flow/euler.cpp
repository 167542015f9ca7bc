#include "flas/flow/euler.hpp"

#include "flas/errors.hpp"
#include "flas/numcore/ops.hpp"

#include <cmath>
#include <string>

namespace flas::flow {

namespace {

bool all_finite(const Tensor& t) {
    for (double v : t.data()) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace

EulerResult euler_integrate(const Tensor& h0, double T, std::size_t n_steps, const VelocityField& field,
                            bool keep_states) {
    if (n_steps == 0) throw UsageError("euler_integrate: N must be >= 1");
    if (!(T >= 0.0)) throw UsageError("euler_integrate: T must be >= 0");
    const double dt = T / static_cast<double>(n_steps);
    EulerResult out;
    Tensor h = h0;
    if (keep_states) out.states.push_back(h);
    for (std::size_t k = 0; k < n_steps; ++k) {
        Tensor v = field(h, static_cast<double>(k) * dt, k);
        if (v.shape() != h.shape()) {
            throw DimensionError("euler_integrate: velocity shape " + shape_str(v.shape()) + " != state shape " +
                                 shape_str(h.shape()));
        }
        // A zero step leaves the state untouched so T = 0 is an exact identity.
        if (dt != 0.0) h = add(h, scale(v, dt));
        if (!all_finite(h)) {
            throw NumericError("euler_integrate: non-finite state after step " + std::to_string(k));
        }
        out.velocities.push_back(std::move(v));
        if (keep_states) out.states.push_back(h);
    }
    out.final_state = h;
    return out;
}

}  // namespace flas::flow
