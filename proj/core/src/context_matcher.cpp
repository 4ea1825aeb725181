#include <cacp/context_matcher.hpp>
#include <cacp/util.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

namespace cacp {

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) throw LogicError("embedding dim mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (int i = 0; i < a.dim(); ++i) {
        dot += static_cast<double>(a.values[i]) * b.values[i];
        na += static_cast<double>(a.values[i]) * a.values[i];
        nb += static_cast<double>(b.values[i]) * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) throw LogicError("zero-norm embedding");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::string category_phrase(const std::string& category) {
    std::string phrase = to_lower(category);
    std::replace(phrase.begin(), phrase.end(), '_', ' ');
    return phrase;
}

SimilarityScore similarity(const Caption& caption, const std::string& category,
                           TextEmbedder& embedder) {
    if (trim(caption.text).empty()) throw LogicError("empty caption");
    if (trim(category).empty()) throw LogicError("empty category");
    auto a = embedder.embed(caption.text);
    auto b = embedder.embed(category_phrase(category));
    return SimilarityScore{category, cosine_similarity(a, b)};
}

EmbeddingCache embed_categories(const GalleryIndex& index, TextEmbedder& embedder) {
    EmbeddingCache cache;
    for (const auto& category : index.categories)
        cache.emplace(category, embedder.embed(category_phrase(category)));
    return cache;
}

MatchResult match_category(const cv::Mat& base_image, const GalleryIndex& index,
                           Captioner& captioner, TextEmbedder& embedder,
                           const EmbeddingCache* cache, int top_k,
                           std::uint64_t rng_seed) {
    if (index.categories.empty()) throw ConfigError("empty gallery: nothing to match");
    if (top_k < 1) throw ConfigError("match top_k must be >= 1");

    MatchResult result;
    result.base_caption = captioner.caption(base_image);
    auto caption_vec = embedder.embed(result.base_caption.text);

    result.ranking.reserve(index.categories.size());
    for (const auto& category : index.categories) {
        double score;
        if (cache) {
            auto it = cache->find(category);
            if (it == cache->end())
                throw LogicError("category missing from embedding cache: " + category);
            score = cosine_similarity(caption_vec, it->second);
        } else {
            score = cosine_similarity(caption_vec, embedder.embed(category_phrase(category)));
        }
        result.ranking.push_back(SimilarityScore{category, score});
    }
    std::sort(result.ranking.begin(), result.ranking.end(),
              [](const SimilarityScore& a, const SimilarityScore& b) {
                  if (a.score != b.score) return a.score > b.score;
                  return a.category < b.category;
              });

    if (top_k <= 1) {
        result.chosen = result.ranking.front().category;
    } else {
        auto k = std::min<std::size_t>(top_k, result.ranking.size());
        std::mt19937_64 rng(rng_seed);
        std::uniform_int_distribution<std::size_t> pick(0, k - 1);
        result.chosen = result.ranking[pick(rng)].category;
    }
    return result;
}

void save_embedding_cache(const EmbeddingCache& cache,
                          const std::filesystem::path& path) {
    if (cache.empty()) throw LogicError("refusing to save an empty embedding cache");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write embedding cache: " + path.string());
    out << "CACP-EMB v1 dim=" << cache.begin()->second.dim() << '\n';
    for (const auto& [category, vec] : cache) {
        out << category << '\t'
            << base64_encode(vec.values.data(), vec.values.size() * sizeof(float))
            << '\n';
    }
}

EmbeddingCache load_embedding_cache(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open embedding cache: " + path.string());
    std::string header;
    std::getline(in, header);
    int dim = 0;
    if (std::sscanf(header.c_str(), "CACP-EMB v1 dim=%d", &dim) != 1 || dim < 1)
        throw IoError("bad embedding cache header in " + path.string());

    EmbeddingCache cache;
    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto fields = split(line, '\t');
        if (fields.size() != 2)
            throw IoError("malformed embedding cache " + path.string() + ":" +
                          std::to_string(line_no));
        auto bytes = base64_decode(fields[1]);
        if (bytes.size() != static_cast<std::size_t>(dim) * sizeof(float))
            throw IoError("embedding size mismatch in " + path.string() + ":" +
                          std::to_string(line_no));
        EmbeddingVector vec;
        vec.values.resize(static_cast<std::size_t>(dim));
        std::memcpy(vec.values.data(), bytes.data(), bytes.size());
        cache.emplace(fields[0], std::move(vec));
    }
    return cache;
}

}  // namespace cacp
