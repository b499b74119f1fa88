#pragma once

#include "json_fields.hpp"
#include "lowshot/benchmark.hpp"
#include "lowshot/theory.hpp"

namespace lowshot::detail {

ordered_json to_json(const ClassifierTrainConfig& c);
ordered_json to_json(const HyperGrid& g);
ordered_json to_json(const MethodSpec& m);
ordered_json to_json(const BenchmarkConfig& c);
ordered_json to_json(const ReprLossConfig& c);
ordered_json to_json(const CentroidConfig& c);
ordered_json to_json(const GeneratorTrainConfig& c);
ordered_json to_json(const PipelineConfig& c);
ordered_json to_json(const SyntheticSpec& s);
ordered_json to_json(const LipschitzSuiteConfig& c);
ordered_json to_json(const DistanceSuiteConfig& c);
ordered_json to_json(const GradnormConfig& c);

// Each reader fills only the keys present, rejects unknown keys and then
// runs the type's own validation, reporting failures against `f`'s path.
void from_json(Fields f, ClassifierTrainConfig& c);
void from_json(Fields f, HyperGrid& g);
void from_json(Fields f, MethodSpec& m);
void from_json(Fields f, BenchmarkConfig& c);
void from_json(Fields f, ReprLossConfig& c);
void from_json(Fields f, CentroidConfig& c);
void from_json(Fields f, GeneratorTrainConfig& c);
void from_json(Fields f, PipelineConfig& c);
void from_json(Fields f, SyntheticSpec& s);
void from_json(Fields f, LipschitzSuiteConfig& c);
void from_json(Fields f, DistanceSuiteConfig& c);
void from_json(Fields f, GradnormConfig& c);

}  // namespace lowshot::detail
