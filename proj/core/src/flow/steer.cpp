#include "flas/flow/steer.hpp"

#include "flas/errors.hpp"

namespace flas::flow {

FlowSteerer::FlowSteerer(const FlowModel& flow, ConceptCache cache, double T, std::size_t n_steps, bool record)
    : flow_(&flow),
      cache_(std::move(cache)),
      T_(T),
      n_steps_(n_steps == 0 ? flow.config().n_steps : n_steps),
      record_(record),
      self_cache_(n_steps_, flow.config().n_blocks) {
    if (!(T >= 0.0)) throw UsageError("steer: T must be >= 0");
}

void FlowSteerer::reset() {
    self_cache_.reset();
    records_.clear();
}

Tensor FlowSteerer::operator()(const Tensor& h, std::size_t pos_offset) {
    if (pos_offset == 0) self_cache_.reset();
    if (self_cache_.length(0) != pos_offset) {
        throw UsageError("steer: hook called at position " + std::to_string(pos_offset) + " but " +
                         std::to_string(self_cache_.length(0)) + " positions are cached");
    }
    auto field = [&](const Tensor& x, double t, std::size_t k) {
        return flow_->velocity(x, t, cache_, &self_cache_, k, pos_offset);
    };
    EulerResult r = euler_integrate(h, T_, n_steps_, field, record_);
    Tensor out = r.final_state;
    if (record_) records_.push_back(std::move(r));
    return out;
}

lm::Hook FlowSteerer::hook() {
    return [this](const Tensor& h, std::size_t pos_offset) { return (*this)(h, pos_offset); };
}

Tensor steer(const FlowModel& flow, const Tensor& h, const ConceptCache& cache, double T, std::size_t n_steps) {
    const std::size_t n = n_steps == 0 ? flow.config().n_steps : n_steps;
    auto field = [&](const Tensor& x, double t, std::size_t k) {
        return flow.velocity(x, t, cache, nullptr, k, 0);
    };
    return euler_integrate(h, T, n, field).final_state;
}

ConceptCache concept_cache_for(const FlowModel& flow, const lm::LanguageModel& base, const std::string& concept_text) {
    const auto c = lm::make_concept(concept_text, base.config().max_concept_len);
    return flow.build_concept_cache(base.encode_concept(c));
}

}  // namespace flas::flow
