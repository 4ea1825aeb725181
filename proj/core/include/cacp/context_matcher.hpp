#pragma once

#include <cacp/backends.hpp>
#include <cacp/gallery.hpp>
#include <cacp/types.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace cacp {

struct SimilarityScore {
    std::string category;
    double score = 0.0;  // cosine, in [-1, 1]
};

// Ranking is sorted by score descending, ties lexicographically by category.
// chosen == ranking.front() for the default top_k = 1.
struct MatchResult {
    Caption base_caption;
    std::vector<SimilarityScore> ranking;
    std::string chosen;
};

using EmbeddingCache = std::map<std::string, EmbeddingVector>;

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Category names are fed to the embedder lowercased with underscores
// replaced by spaces; folder names are filesystem-safe, embedders expect
// natural words.
std::string category_phrase(const std::string& category);

SimilarityScore similarity(const Caption& caption, const std::string& category,
                           TextEmbedder& embedder);

// One vector per category, built once per run and reused across images.
EmbeddingCache embed_categories(const GalleryIndex& index, TextEmbedder& embedder);

// Captions the base image, scores every gallery category, and picks the
// best. top_k > 1 draws uniformly among the top-k entries (seeded).
MatchResult match_category(const cv::Mat& base_image, const GalleryIndex& index,
                           Captioner& captioner, TextEmbedder& embedder,
                           const EmbeddingCache* cache = nullptr, int top_k = 1,
                           std::uint64_t rng_seed = 0);

// Cache persistence: header "CACP-EMB v1 dim=<d>", then
// "category TAB base64(float32 little-endian values)" lines.
void save_embedding_cache(const EmbeddingCache& cache,
                          const std::filesystem::path& path);
EmbeddingCache load_embedding_cache(const std::filesystem::path& path);

}  // namespace cacp
