#include "stoic/rng.hpp"

#include <cmath>

namespace stoic {

double Rng::normal() {
    // 1 - uniform() lies in (0, 1], keeping the log finite.
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    return r * std::cos(2.0 * M_PI * u2);
}

}  // namespace stoic
