#include "flas/flow/methods.hpp"

#include "flas/errors.hpp"
#include "flas/flow/steer.hpp"

#include <memory>

namespace flas::flow {

Method method_from_string(const std::string& s) {
    if (s == "flas") return Method::flas;
    if (s == "additive") return Method::additive;
    if (s == "act") return Method::act;
    if (s == "none") return Method::none;
    throw UsageError("unknown method '" + s + "' (expected flas, additive, act or none)");
}

std::string to_string(Method m) {
    switch (m) {
        case Method::flas: return "flas";
        case Method::additive: return "additive";
        case Method::act: return "act";
        case Method::none: return "none";
    }
    return "none";
}

double default_strength(Method m) { return m == Method::flas ? kDefaultSteerT : 1.0; }

lm::Hook make_hook(const MethodSpec& spec, const lm::LanguageModel& base, const FlowModel* flow,
                   const baselines::BaselineSet* baselines) {
    if (spec.method == Method::none) return {};
    if (spec.concept_text.empty()) throw UsageError("method " + to_string(spec.method) + " needs a concept");
    const double s = spec.strength.value_or(default_strength(spec.method));
    switch (spec.method) {
        case Method::flas: {
            if (!flow) throw UsageError("method flas needs a flow checkpoint");
            auto steerer = std::make_shared<FlowSteerer>(*flow, concept_cache_for(*flow, base, spec.concept_text), s,
                                                         spec.n_steps);
            return [steerer](const Tensor& h, std::size_t pos) { return (*steerer)(h, pos); };
        }
        case Method::additive: {
            if (!baselines || !baselines->diffmean.count(spec.concept_text)) {
                throw DataError("no DiffMean vector for concept '" + spec.concept_text + "'");
            }
            Tensor delta = baselines->diffmean.at(spec.concept_text);
            return [delta, s](const Tensor& h, std::size_t) { return baselines::additive_steer(h, delta, s); };
        }
        case Method::act: {
            if (!baselines || !baselines->act.count(spec.concept_text)) {
                throw DataError("no ACT map for concept '" + spec.concept_text + "'");
            }
            auto map = baselines->act.at(spec.concept_text);
            return [map, s](const Tensor& h, std::size_t) { return baselines::act_steer(h, map, s); };
        }
        case Method::none: break;
    }
    return {};
}

}  // namespace flas::flow
