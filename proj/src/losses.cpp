#include "flashscan/losses.hpp"

namespace flashscan {

// Anchor the template instantiations used across the project so type errors
// surface here rather than in every consumer.
template double photometric_l1<double>(std::span<const Vec3>, std::span<const Vec3>);
template Ad photometric_l1<Ad>(std::span<const Vec3T<Ad>>, std::span<const Vec3>);
template double total_loss<double>(const LossInputs<double>&, const LossWeights&, LossBreakdown*);
template Ad total_loss<Ad>(const LossInputs<Ad>&, const LossWeights&, LossBreakdown*);

}  // namespace flashscan
