#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "scenecond/camera.hpp"

namespace scenecond {

using TokenBitset = std::vector<std::uint8_t>;

/// Token bit = 1 when the patch's set-pixel fraction reaches `min_coverage`;
/// 0 means any set pixel is enough. Tokens are row-major over patches.
/// Throws Error{IndivisibleDims}.
TokenBitset patchify_mask(const EntityMask2D& mask, int patch_size, double min_coverage = 0.0);

// Sequence S = [P, P_1..P_k, C_D, X].
struct TokenLayout {
    std::size_t n_global = 1;
    std::vector<std::size_t> n_local;
    std::size_t n_depth = 1;
    int grid_width = 1;
    int grid_height = 1;
    int patch_size = 1;

    /// Throws Error{IndivisibleDims} / Error{InvalidArgument}.
    static TokenLayout for_image(std::size_t n_global, std::vector<std::size_t> n_local, std::size_t n_depth,
                                 int image_width, int image_height, int patch_size);

    std::size_t entity_count() const { return n_local.size(); }
    std::size_t n_image() const { return static_cast<std::size_t>(grid_width) * grid_height; }
    std::size_t segment_count() const { return n_local.size() + 3; }
    std::size_t total() const;

    // Segment indices: 0 = P, 1..k = P_j, k+1 = C_D, k+2 = X.
    std::size_t depth_segment() const { return n_local.size() + 1; }
    std::size_t image_segment() const { return n_local.size() + 2; }
    std::size_t segment_offset(std::size_t segment) const;
    std::size_t segment_length(std::size_t segment) const;
    std::string segment_name(std::size_t segment) const;
    std::size_t segment_of(std::size_t token) const;

    void validate() const;
};

enum class BlockRule : std::uint8_t { Allowed, Blocked, Region };

class AttentionMask {
public:
    AttentionMask(TokenLayout layout, std::vector<TokenBitset> entity_bitsets, bool global_isolated,
                  std::vector<BlockRule> block_rules);

    const TokenLayout& layout() const { return layout_; }
    const std::vector<TokenBitset>& entity_bitsets() const { return bitsets_; }
    bool global_isolated() const { return global_isolated_; }
    BlockRule rule(std::size_t row_segment, std::size_t col_segment) const;
    std::size_t size() const { return layout_.total(); }

    bool allowed(std::size_t query, std::size_t key) const;

    /// Cell-level edit layered over the block rules.
    void set(std::size_t query, std::size_t key, bool value);
    const std::map<std::pair<std::size_t, std::size_t>, bool>& overrides() const { return overrides_; }

    /// Dense row-major |S| x |S| matrix of 0/1.
    std::vector<std::uint8_t> materialize() const;

private:
    TokenLayout layout_;
    std::vector<TokenBitset> bitsets_;
    bool global_isolated_;
    std::vector<BlockRule> rules_;  // segment_count^2, row-major
    std::map<std::pair<std::size_t, std::size_t>, bool> overrides_;
};

struct AttentionMaskOptions {
    // Blocks P against P_j and C_D. false keeps the literal condition-only isolation.
    bool global_isolated = true;
};

/// Throws Error{LengthMismatch} when the bitset count differs from k or a
/// bitset length differs from n_image.
AttentionMask build_attention_mask(const TokenLayout& layout, const std::vector<TokenBitset>& entity_bitsets,
                                   const AttentionMaskOptions& options = {});

struct MaskViolation {
    std::size_t row = 0;
    std::size_t col = 0;
    std::string row_segment;
    std::string col_segment;
    char rule = '?';  // 'a'..'e'
    bool actual = false;
    bool expected = false;
};

struct AuditReport {
    std::vector<MaskViolation> violations;
    bool ok() const { return violations.empty(); }
};

/// Re-derives every cell from the layout, the entity bitsets and the global
/// isolation policy, independently of the block table.
AuditReport audit_mask(const AttentionMask& mask);

std::string serialize_audit(const AuditReport& report);

std::string attention_mask_to_json(const AttentionMask& mask);
/// Throws Error{MissingKey | TypeMismatch | LengthMismatch}.
AttentionMask attention_mask_from_json(std::string_view text);
std::string attention_mask_to_pbm(const AttentionMask& mask);

// Small dense row-major matrix for the reference attention kernel.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// Softmax(Q K^T / sqrt(d_k) + log M) V with log 0 = -inf. `mask` is a dense
/// row-major n x n 0/1 matrix (n = Q.rows = K.rows).
/// Throws Error{ShapeMismatch}.
Matrix masked_attention(const Matrix& q, const Matrix& k, const Matrix& v, const std::vector<std::uint8_t>& mask);
Matrix masked_attention(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionMask& mask);

}  // namespace scenecond
