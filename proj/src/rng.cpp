#include "glfield/rng.hpp"

#include <boost/random/normal_distribution.hpp>

namespace glf {

double standard_normal(Xoshiro256& rng) {
    boost::random::normal_distribution<double> dist(0.0, 1.0);
    return dist(rng);
}

} // namespace glf
