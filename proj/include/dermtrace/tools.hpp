// SPDX-License-Identifier: Apache-2.0
#pragma once

/// Tool interface, registry and the concrete tools: the four perception
/// tools (fixture-backed or remote) plus adapters exposing case retrieval,
/// guideline retrieval and the ontology as tools.
///
/// Fixture file: one JSON object per line, {tool_id, image_ref, params, result}.
/// Lookups match exactly on (tool_id, image_ref, canonicalised params).

#include "dermtrace/case_store.hpp"
#include "dermtrace/evidence.hpp"
#include "dermtrace/guideline.hpp"
#include "dermtrace/ontology.hpp"
#include "dermtrace/remote.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace dermtrace {

struct ToolDescriptor {
    ToolId tool = ToolId::panderm;
    std::vector<ParamSpec> param_schema;
    bool produces_confidence = false;
    std::string description;

    /// Descriptor with the built-in schema and planner-facing description.
    static ToolDescriptor standard(ToolId id);
};

/// Opaque image: the reference always, the bytes when they were loaded.
struct ImageInput {
    std::string ref;
    std::shared_ptr<const std::string> bytes;
};

struct ToolRequest {
    ImageInput image;
    Params params = json::object();
};

struct ToolOutput {
    json result;
    std::optional<double> confidence;
    std::vector<std::string> sources;
};

/// Implementations must tolerate concurrent invocation.
class Tool {
public:
    virtual ~Tool() = default;
    virtual ToolOutput invoke(const ToolRequest& request) = 0;
};

/// Built once, then read-only.
class ToolRegistry {
public:
    void register_tool(ToolDescriptor descriptor, std::shared_ptr<Tool> impl);

    bool contains(ToolId id) const { return entries_.count(id) != 0; }
    const ToolDescriptor& descriptor(ToolId id) const;
    std::shared_ptr<Tool> tool(ToolId id) const;
    std::vector<ToolId> registered() const;

    /// Validates params against the descriptor schema, then invokes.
    ToolOutput dispatch(const ToolCall& call, const ImageInput& image) const;

private:
    struct Entry {
        ToolDescriptor descriptor;
        std::shared_ptr<Tool> impl;
    };
    std::map<ToolId, Entry> entries_;
};

class FixtureStore {
public:
    static FixtureStore load(const std::filesystem::path& path);

    void add(ToolId tool, const std::string& image_ref, const Params& params, json result);
    const json* find(ToolId tool, const std::string& image_ref, const Params& params) const;
    /// Raises UnknownInputError on a miss.
    const json& lookup(ToolId tool, const std::string& image_ref, const Params& params) const;
    std::size_t size() const noexcept { return records_.size(); }

private:
    static std::string key(ToolId tool, const std::string& image_ref, const Params& params);
    std::unordered_map<std::string, json> records_;
};

struct Prediction {
    std::string label;
    double score = 0.0;

    friend bool operator==(const Prediction&, const Prediction&) = default;
};

struct AnnotationSet {
    std::vector<std::string> present;
    std::map<std::string, double> scores;
};

inline constexpr double default_concept_threshold = 0.5;

/// Maps scores reported as percentages onto [0,1] and rejects anything else
/// outside the unit interval.
double normalize_confidence(double score);

/// Keeps only labels from `candidates` (spelled as given there) and sorts by
/// score descending, label ascending.
std::vector<Prediction> rank_predictions(std::vector<Prediction> raw, std::span<const std::string> candidates);

class Classifier {
public:
    virtual ~Classifier() = default;
    virtual std::vector<Prediction> classify(const ImageInput& image, std::span<const std::string> candidates) = 0;
};

class Annotator {
public:
    virtual ~Annotator() = default;
    /// Raw per-feature scores.
    virtual std::map<std::string, double> score_concepts(const ImageInput& image,
                                                         std::span<const std::string> features) = 0;
};

class VqaBackend {
public:
    virtual ~VqaBackend() = default;
    virtual std::string answer(const ImageInput& image, const std::string& question) = 0;
};

/// Image encoder for case retrieval.
class ImageEmbedder {
public:
    virtual ~ImageEmbedder() = default;
    virtual std::vector<float> embed(const ImageInput& image) = 0;
};

class FixtureClassifier final : public Classifier {
public:
    explicit FixtureClassifier(std::shared_ptr<const FixtureStore> fixtures) : fixtures_(std::move(fixtures)) {}
    std::vector<Prediction> classify(const ImageInput& image, std::span<const std::string> candidates) override;

private:
    std::shared_ptr<const FixtureStore> fixtures_;
};

class FixtureAnnotator final : public Annotator {
public:
    explicit FixtureAnnotator(std::shared_ptr<const FixtureStore> fixtures) : fixtures_(std::move(fixtures)) {}
    std::map<std::string, double> score_concepts(const ImageInput& image,
                                                 std::span<const std::string> features) override;

private:
    std::shared_ptr<const FixtureStore> fixtures_;
};

class FixtureVqa final : public VqaBackend {
public:
    FixtureVqa(std::shared_ptr<const FixtureStore> fixtures, ToolId backend)
        : fixtures_(std::move(fixtures)), backend_(backend) {}
    std::string answer(const ImageInput& image, const std::string& question) override;

private:
    std::shared_ptr<const FixtureStore> fixtures_;
    ToolId backend_;
};

/// Embeddings keyed by image_ref, from JSONL records {image_ref, embedding}.
class FixtureImageEmbedder final : public ImageEmbedder {
public:
    static std::shared_ptr<FixtureImageEmbedder> load(const std::filesystem::path& path);
    void add(std::string image_ref, std::vector<float> embedding);
    std::vector<float> embed(const ImageInput& image) override;

private:
    std::unordered_map<std::string, std::vector<float>> by_ref_;
};

/// Remote adapters: the request content carries the tool parameters as a
/// fenced JSON block; the reply content carries a JSON block with the result.
class RemoteClassifier final : public Classifier {
public:
    explicit RemoteClassifier(RemoteEndpoint ep, HttpTransport& t = default_transport())
        : endpoint_(std::move(ep)), transport_(t) {}
    std::vector<Prediction> classify(const ImageInput& image, std::span<const std::string> candidates) override;

private:
    RemoteEndpoint endpoint_;
    HttpTransport& transport_;
};

class RemoteAnnotator final : public Annotator {
public:
    explicit RemoteAnnotator(RemoteEndpoint ep, HttpTransport& t = default_transport())
        : endpoint_(std::move(ep)), transport_(t) {}
    std::map<std::string, double> score_concepts(const ImageInput& image,
                                                 std::span<const std::string> features) override;

private:
    RemoteEndpoint endpoint_;
    HttpTransport& transport_;
};

class RemoteVqa final : public VqaBackend {
public:
    explicit RemoteVqa(RemoteEndpoint ep, HttpTransport& t = default_transport())
        : endpoint_(std::move(ep)), transport_(t) {}
    std::string answer(const ImageInput& image, const std::string& question) override;

private:
    RemoteEndpoint endpoint_;
    HttpTransport& transport_;
};

class RemoteImageEmbedder final : public ImageEmbedder {
public:
    RemoteImageEmbedder(RemoteEndpoint ep, std::size_t dimension, HttpTransport& t = default_transport())
        : endpoint_(std::move(ep)), dim_(dimension), transport_(t) {}
    std::vector<float> embed(const ImageInput& image) override;

private:
    RemoteEndpoint endpoint_;
    std::size_t dim_;
    HttpTransport& transport_;
};

std::vector<Prediction> classify(Classifier& backend, const ImageInput& image, std::span<const std::string> candidates);

AnnotationSet annotate_concepts(Annotator& backend, const ImageInput& image, std::span<const std::string> features,
                                double threshold = default_concept_threshold);

std::string vqa(VqaBackend& backend, const ImageInput& image, const std::string& question);

class ClassifierTool final : public Tool {
public:
    explicit ClassifierTool(std::shared_ptr<Classifier> backend) : backend_(std::move(backend)) {}
    ToolOutput invoke(const ToolRequest& request) override;

private:
    std::shared_ptr<Classifier> backend_;
};

class AnnotatorTool final : public Tool {
public:
    AnnotatorTool(std::shared_ptr<Annotator> backend, double threshold)
        : backend_(std::move(backend)), threshold_(threshold) {}
    ToolOutput invoke(const ToolRequest& request) override;

private:
    std::shared_ptr<Annotator> backend_;
    double threshold_;
};

class VqaTool final : public Tool {
public:
    explicit VqaTool(std::shared_ptr<VqaBackend> backend) : backend_(std::move(backend)) {}
    ToolOutput invoke(const ToolRequest& request) override;

private:
    std::shared_ptr<VqaBackend> backend_;
};

class CaseRagTool final : public Tool {
public:
    CaseRagTool(std::shared_ptr<const CaseStore> store, std::shared_ptr<ImageEmbedder> encoder, int default_k,
                std::shared_ptr<const OntologyIndex> ontology = nullptr)
        : store_(std::move(store)), encoder_(std::move(encoder)), default_k_(default_k), ontology_(std::move(ontology))
    {
    }
    ToolOutput invoke(const ToolRequest& request) override;

private:
    std::shared_ptr<const CaseStore> store_;
    std::shared_ptr<ImageEmbedder> encoder_;
    int default_k_;
    std::shared_ptr<const OntologyIndex> ontology_;
};

class GuidelineRagTool final : public Tool {
public:
    GuidelineRagTool(std::shared_ptr<const GuidelineIndex> index, std::shared_ptr<const StopWordList> stops,
                     std::shared_ptr<EmbeddingProvider> embedder, std::shared_ptr<RerankProvider> reranker,
                     GuidelinePipelineConfig config)
        : index_(std::move(index)), stops_(std::move(stops)), embedder_(std::move(embedder)),
          reranker_(std::move(reranker)), config_(config)
    {
    }
    ToolOutput invoke(const ToolRequest& request) override;

private:
    std::shared_ptr<const GuidelineIndex> index_;
    std::shared_ptr<const StopWordList> stops_;
    std::shared_ptr<EmbeddingProvider> embedder_;
    std::shared_ptr<RerankProvider> reranker_;
    GuidelinePipelineConfig config_;
};

class OntologyTool final : public Tool {
public:
    OntologyTool(std::shared_ptr<const OntologyIndex> index, double threshold)
        : index_(std::move(index)), threshold_(threshold) {}
    ToolOutput invoke(const ToolRequest& request) override;

private:
    std::shared_ptr<const OntologyIndex> index_;
    double threshold_;
};

} // namespace dermtrace
