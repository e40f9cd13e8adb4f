// SPDX-License-Identifier: Apache-2.0
#include "dermtrace/tools.hpp"

#include "dermtrace/error.hpp"

#include <algorithm>
#include <set>

namespace dermtrace {

ToolDescriptor ToolDescriptor::standard(ToolId id)
{
    ToolDescriptor d;
    d.tool = id;
    d.param_schema = dermtrace::param_schema(id);
    d.produces_confidence = dermtrace::produces_confidence(id);
    switch (id) {
    case ToolId::panderm:
        d.description = "Zero-shot skin disease classifier. Ranks the candidate labels by image-text similarity.";
        break;
    case ToolId::make:
        d.description = "Dermoscopic concept annotator. Scores each requested feature and reports those present.";
        break;
    case ToolId::dermo_gpt:
        d.description = "Dermatology visual question answering; free-text morphological description.";
        break;
    case ToolId::qwen_vl:
        d.description = "General visual question answering for complementary questions.";
        break;
    case ToolId::case_rag:
        d.description = "Retrieves the k most similar diagnosed cases with labels, categories and descriptions.";
        break;
    case ToolId::guideline_rag:
        d.description = "Hybrid search over clinical guideline passages; returns diseases, sections and URLs.";
        break;
    case ToolId::ontology:
        d.description = "Disease taxonomy lookup: mode is hierarchy, children, siblings or search.";
        break;
    }
    return d;
}

void ToolRegistry::register_tool(ToolDescriptor descriptor, std::shared_ptr<Tool> impl)
{
    auto id = descriptor.tool;
    if (!impl)
        throw RegistrationError(std::string(to_string(id)) + ": null implementation");
    std::set<std::string> keys;
    for (const auto& p : descriptor.param_schema) {
        if (!keys.insert(p.name).second)
            throw RegistrationError(std::string(to_string(id)) + ": duplicate schema key '" + p.name + "'");
    }
    if (descriptor.produces_confidence != produces_confidence(id))
        throw RegistrationError(std::string(to_string(id)) + ": produces_confidence disagrees with the tool kind");
    if (entries_.count(id))
        throw RegistrationError(std::string(to_string(id)) + " is already registered");
    entries_.emplace(id, Entry{std::move(descriptor), std::move(impl)});
}

const ToolDescriptor& ToolRegistry::descriptor(ToolId id) const
{
    auto it = entries_.find(id);
    if (it == entries_.end())
        throw DispatchError(std::string(to_string(id)) + " is not registered");
    return it->second.descriptor;
}

std::shared_ptr<Tool> ToolRegistry::tool(ToolId id) const
{
    auto it = entries_.find(id);
    if (it == entries_.end())
        throw DispatchError(std::string(to_string(id)) + " is not registered");
    return it->second.impl;
}

std::vector<ToolId> ToolRegistry::registered() const
{
    std::vector<ToolId> out;
    for (const auto& [id, _] : entries_)
        out.push_back(id);
    return out;
}

ToolOutput ToolRegistry::dispatch(const ToolCall& call, const ImageInput& image) const
{
    auto impl = tool(call.tool);
    validate_params(call.tool, call.params);
    return impl->invoke(ToolRequest{image, call.params});
}

std::string FixtureStore::key(ToolId tool, const std::string& image_ref, const Params& params)
{
    return std::string(to_string(tool)) + '\x1f' + image_ref + '\x1f' + canonicalize_params(params).dump();
}

FixtureStore FixtureStore::load(const std::filesystem::path& path)
{
    FixtureStore store;
    for_each_jsonl(path, [&](std::size_t line, const json& rec) {
        try {
            store.add(tool_from_string(rec.at("tool_id").get<std::string>()), rec.at("image_ref").get<std::string>(),
                      rec.value("params", json::object()), rec.at("result"));
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(line) + ": " + e.what(), rec.dump());
        }
    });
    return store;
}

void FixtureStore::add(ToolId tool, const std::string& image_ref, const Params& params, json result)
{
    records_[key(tool, image_ref, params)] = std::move(result);
}

const json* FixtureStore::find(ToolId tool, const std::string& image_ref, const Params& params) const
{
    auto it = records_.find(key(tool, image_ref, params));
    return it == records_.end() ? nullptr : &it->second;
}

const json& FixtureStore::lookup(ToolId tool, const std::string& image_ref, const Params& params) const
{
    if (const auto* r = find(tool, image_ref, params))
        return *r;
    throw UnknownInputError("no " + std::string(to_string(tool)) + " fixture for image '" + image_ref
                            + "' with params " + canonicalize_params(params).dump());
}

double normalize_confidence(double score)
{
    if (score >= 0.0 && score <= 1.0)
        return score;
    if (score > 1.0 && score <= 100.0)
        return score / 100.0;
    throw ValidationError("score " + std::to_string(score) + " is neither a probability nor a percentage");
}

std::vector<Prediction> rank_predictions(std::vector<Prediction> raw, std::span<const std::string> candidates)
{
    bool percent = std::any_of(raw.begin(), raw.end(), [](const Prediction& p) { return p.score > 1.0; });
    std::vector<Prediction> out;
    std::set<std::string> taken;
    for (auto& p : raw) {
        auto folded = casefold(trim(p.label));
        auto it = std::find_if(candidates.begin(), candidates.end(),
                               [&](const std::string& c) { return casefold(trim(c)) == folded; });
        if (it == candidates.end() || !taken.insert(folded).second)
            continue;
        double s = percent ? p.score / 100.0 : p.score;
        out.push_back(Prediction{*it, normalize_confidence(s)});
    }
    std::sort(out.begin(), out.end(), [](const Prediction& a, const Prediction& b) {
        if (a.score != b.score)
            return a.score > b.score;
        return a.label < b.label;
    });
    return out;
}

namespace {

std::vector<Prediction> predictions_from_json(const json& j)
{
    const json& arr = j.is_object() && j.contains("predictions") ? j["predictions"] : j;
    if (!arr.is_array())
        throw ValidationError("classifier result must be an array of {label, score}");
    std::vector<Prediction> out;
    for (const auto& p : arr)
        out.push_back(Prediction{p.at("label").get<std::string>(), p.at("score").get<double>()});
    return out;
}

json predictions_to_json(const std::vector<Prediction>& preds)
{
    json arr = json::array();
    for (const auto& p : preds)
        arr.push_back({{"label", p.label}, {"score", p.score}});
    return arr;
}

std::vector<std::string> string_list(const Params& params, const char* key)
{
    return params.at(key).get<std::vector<std::string>>();
}

std::optional<std::string> image_bytes(const ImageInput& image)
{
    if (image.bytes)
        return *image.bytes;
    return std::nullopt;
}

std::string fenced(const json& j)
{
    return "```json\n" + j.dump() + "\n```";
}

json remote_block(const RemoteEndpoint& ep, HttpTransport& transport, const json& request, const ImageInput& image,
                  const std::function<bool(const json&)>& accept)
{
    auto content = remote_chat({{"user", fenced(request)}}, image_bytes(image), ep, transport);
    auto block = find_json_block(content, accept);
    if (!block)
        throw TransportError(TransportFailure::malformed, "tool reply carries no usable structured block");
    return *block;
}

} // namespace

std::vector<Prediction> FixtureClassifier::classify(const ImageInput& image, std::span<const std::string> candidates)
{
    Params params{{"candidates", std::vector<std::string>(candidates.begin(), candidates.end())}};
    return predictions_from_json(fixtures_->lookup(ToolId::panderm, image.ref, params));
}

std::map<std::string, double> FixtureAnnotator::score_concepts(const ImageInput& image,
                                                               std::span<const std::string> features)
{
    Params params{{"features", std::vector<std::string>(features.begin(), features.end())}};
    const auto& result = fixtures_->lookup(ToolId::make, image.ref, params);
    const json& scores = result.contains("scores") ? result["scores"] : result;
    return scores.get<std::map<std::string, double>>();
}

std::string FixtureVqa::answer(const ImageInput& image, const std::string& question)
{
    const auto& result = fixtures_->lookup(backend_, image.ref, Params{{"question", question}});
    if (result.is_string())
        return result.get<std::string>();
    return result.at("text").get<std::string>();
}

std::shared_ptr<FixtureImageEmbedder> FixtureImageEmbedder::load(const std::filesystem::path& path)
{
    auto out = std::make_shared<FixtureImageEmbedder>();
    for_each_jsonl(path, [&](std::size_t line, const json& rec) {
        try {
            out->add(rec.at("image_ref").get<std::string>(), rec.at("embedding").get<std::vector<float>>());
        } catch (const json::exception& e) {
            throw ParseError(path.string() + ":" + std::to_string(line) + ": " + e.what(), rec.dump());
        }
    });
    return out;
}

void FixtureImageEmbedder::add(std::string image_ref, std::vector<float> embedding)
{
    by_ref_[std::move(image_ref)] = std::move(embedding);
}

std::vector<float> FixtureImageEmbedder::embed(const ImageInput& image)
{
    auto it = by_ref_.find(image.ref);
    if (it == by_ref_.end())
        throw UnknownInputError("no image embedding fixture for '" + image.ref + "'");
    return it->second;
}

std::vector<Prediction> RemoteClassifier::classify(const ImageInput& image, std::span<const std::string> candidates)
{
    json req{{"task", "classify"}, {"candidates", std::vector<std::string>(candidates.begin(), candidates.end())}};
    auto block = remote_block(endpoint_, transport_, req, image, [](const json& j) {
        const json& arr = j.is_object() && j.contains("predictions") ? j["predictions"] : j;
        return arr.is_array();
    });
    try {
        return predictions_from_json(block);
    } catch (const json::exception&) {
        throw TransportError(TransportFailure::malformed, "classifier reply entries lack label/score");
    }
}

std::map<std::string, double> RemoteAnnotator::score_concepts(const ImageInput& image,
                                                              std::span<const std::string> features)
{
    json req{{"task", "annotate"}, {"features", std::vector<std::string>(features.begin(), features.end())}};
    auto block = remote_block(endpoint_, transport_, req, image, [](const json& j) { return j.is_object(); });
    try {
        const json& scores = block.contains("scores") ? block["scores"] : block;
        return scores.get<std::map<std::string, double>>();
    } catch (const json::exception&) {
        throw TransportError(TransportFailure::malformed, "annotator reply is not a feature->score map");
    }
}

std::string RemoteVqa::answer(const ImageInput& image, const std::string& question)
{
    return remote_chat({{"user", question}}, image_bytes(image), endpoint_, transport_);
}

std::vector<float> RemoteImageEmbedder::embed(const ImageInput& image)
{
    json req{{"task", "embed_image"}, {"image_ref", image.ref}};
    auto block = remote_block(endpoint_, transport_, req, image, [](const json& j) { return j.is_array(); });
    std::vector<float> v;
    try {
        v = block.get<std::vector<float>>();
    } catch (const json::exception&) {
        throw TransportError(TransportFailure::malformed, "image embedding reply is not numeric");
    }
    if (v.size() != dim_)
        throw TransportError(TransportFailure::malformed, "image embedding has the wrong dimension");
    return v;
}

std::vector<Prediction> classify(Classifier& backend, const ImageInput& image, std::span<const std::string> candidates)
{
    if (candidates.empty())
        throw ContractViolation("classify requires at least one candidate label");
    return rank_predictions(backend.classify(image, candidates), candidates);
}

AnnotationSet annotate_concepts(Annotator& backend, const ImageInput& image, std::span<const std::string> features,
                                double threshold)
{
    if (features.empty())
        throw ContractViolation("annotate_concepts requires at least one feature");
    auto raw = backend.score_concepts(image, features);
    AnnotationSet out;
    for (const auto& f : features) {
        auto it = raw.find(f);
        if (it == raw.end()) {
            it = std::find_if(raw.begin(), raw.end(),
                              [&](const auto& kv) { return casefold(kv.first) == casefold(f); });
        }
        double s = it == raw.end() ? 0.0 : normalize_confidence(it->second);
        out.scores[f] = s;
        if (s >= threshold)
            out.present.push_back(f);
    }
    return out;
}

std::string vqa(VqaBackend& backend, const ImageInput& image, const std::string& question)
{
    if (trim(question).empty())
        throw ContractViolation("vqa requires a non-empty question");
    return backend.answer(image, question);
}

ToolOutput ClassifierTool::invoke(const ToolRequest& request)
{
    auto candidates = string_list(request.params, "candidates");
    auto preds = classify(*backend_, request.image, candidates);
    if (preds.empty())
        throw UnknownInputError("classifier returned no prediction among the candidates");
    ToolOutput out;
    out.result = json{{"predictions", predictions_to_json(preds)}};
    out.confidence = preds.front().score;
    return out;
}

ToolOutput AnnotatorTool::invoke(const ToolRequest& request)
{
    auto features = string_list(request.params, "features");
    auto ann = annotate_concepts(*backend_, request.image, features, threshold_);
    ToolOutput out;
    out.result = json{{"present", ann.present}, {"scores", ann.scores}, {"threshold", threshold_}};
    return out;
}

ToolOutput VqaTool::invoke(const ToolRequest& request)
{
    ToolOutput out;
    out.result = json{{"text", vqa(*backend_, request.image, request.params.at("question").get<std::string>())}};
    return out;
}

ToolOutput CaseRagTool::invoke(const ToolRequest& request)
{
    auto k = request.params.value("k", default_k_);
    auto query = encoder_->embed(request.image);
    auto hits = store_->search(query, static_cast<std::size_t>(k));
    auto item = case_evidence(hits, request.params, 0, ontology_.get());
    return ToolOutput{std::move(item.result), item.confidence, std::move(item.sources)};
}

ToolOutput GuidelineRagTool::invoke(const ToolRequest& request)
{
    auto item = retrieve_guidelines(request.params.at("query").get<std::string>(), *index_, *stops_, *embedder_,
                                    *reranker_, config_);
    return ToolOutput{std::move(item.result), item.confidence, std::move(item.sources)};
}

ToolOutput OntologyTool::invoke(const ToolRequest& request)
{
    auto mode = ontology_mode_from_string(request.params.at("mode").get<std::string>());
    auto ans = query_ontology(mode, request.params.at("name").get<std::string>(), *index_, threshold_);
    return ToolOutput{ans.to_json(), std::nullopt, {}};
}

} // namespace dermtrace
