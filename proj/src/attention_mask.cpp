#include "scenecond/attention_mask.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "scenecond/error.hpp"

namespace scenecond {

TokenBitset patchify_mask(const EntityMask2D& mask, int patch_size, double min_coverage) {
    if (patch_size <= 0 || mask.width % patch_size != 0 || mask.height % patch_size != 0) {
        throw Error(ErrorCode::IndivisibleDims, "mask " + std::to_string(mask.width) + "x" +
                                                    std::to_string(mask.height) + " not divisible by patch " +
                                                    std::to_string(patch_size));
    }
    const int gw = mask.width / patch_size;
    const int gh = mask.height / patch_size;
    const double patch_area = static_cast<double>(patch_size) * patch_size;
    TokenBitset bits(static_cast<std::size_t>(gw) * gh, 0);
    for (int gy = 0; gy < gh; ++gy) {
        for (int gx = 0; gx < gw; ++gx) {
            std::size_t count = 0;
            for (int y = gy * patch_size; y < (gy + 1) * patch_size; ++y) {
                for (int x = gx * patch_size; x < (gx + 1) * patch_size; ++x) count += mask.at(x, y);
            }
            const bool on = min_coverage <= 0.0 ? count > 0 : static_cast<double>(count) / patch_area >= min_coverage;
            bits[static_cast<std::size_t>(gy) * gw + gx] = on ? 1 : 0;
        }
    }
    return bits;
}

TokenLayout TokenLayout::for_image(std::size_t n_global, std::vector<std::size_t> n_local, std::size_t n_depth,
                                   int image_width, int image_height, int patch_size) {
    if (patch_size <= 0 || image_width % patch_size != 0 || image_height % patch_size != 0) {
        throw Error(ErrorCode::IndivisibleDims, "image dimensions not divisible by patch size");
    }
    TokenLayout layout;
    layout.n_global = n_global;
    layout.n_local = std::move(n_local);
    layout.n_depth = n_depth;
    layout.grid_width = image_width / patch_size;
    layout.grid_height = image_height / patch_size;
    layout.patch_size = patch_size;
    layout.validate();
    return layout;
}

void TokenLayout::validate() const {
    if (n_global == 0 || n_depth == 0 || grid_width <= 0 || grid_height <= 0 || patch_size <= 0) {
        throw Error(ErrorCode::InvalidArgument, "segment lengths must be >= 1");
    }
    if (n_local.empty()) throw Error(ErrorCode::InvalidArgument, "layout needs at least one entity");
    for (auto n : n_local) {
        if (n == 0) throw Error(ErrorCode::InvalidArgument, "local prompt segments must be >= 1");
    }
}

std::size_t TokenLayout::total() const {
    std::size_t sum = n_global + n_depth + n_image();
    for (auto n : n_local) sum += n;
    return sum;
}

std::size_t TokenLayout::segment_length(std::size_t segment) const {
    if (segment == 0) return n_global;
    if (segment <= n_local.size()) return n_local[segment - 1];
    if (segment == depth_segment()) return n_depth;
    return n_image();
}

std::size_t TokenLayout::segment_offset(std::size_t segment) const {
    std::size_t offset = 0;
    for (std::size_t s = 0; s < segment; ++s) offset += segment_length(s);
    return offset;
}

std::string TokenLayout::segment_name(std::size_t segment) const {
    if (segment == 0) return "P";
    if (segment <= n_local.size()) return "P_" + std::to_string(segment);
    if (segment == depth_segment()) return "C_D";
    return "X";
}

std::size_t TokenLayout::segment_of(std::size_t token) const {
    std::size_t end = 0;
    for (std::size_t s = 0; s < segment_count(); ++s) {
        end += segment_length(s);
        if (token < end) return s;
    }
    throw Error(ErrorCode::InvalidArgument, "token index out of range");
}

AttentionMask::AttentionMask(TokenLayout layout, std::vector<TokenBitset> entity_bitsets, bool global_isolated,
                             std::vector<BlockRule> block_rules)
    : layout_(std::move(layout)),
      bitsets_(std::move(entity_bitsets)),
      global_isolated_(global_isolated),
      rules_(std::move(block_rules)) {
    layout_.validate();
    const std::size_t segs = layout_.segment_count();
    if (rules_.size() != segs * segs) throw Error(ErrorCode::LengthMismatch, "block rule table size");
    if (bitsets_.size() != layout_.entity_count()) {
        throw Error(ErrorCode::LengthMismatch, "expected one bitset per entity");
    }
    for (const auto& b : bitsets_) {
        if (b.size() != layout_.n_image()) throw Error(ErrorCode::LengthMismatch, "bitset length != n_image");
    }
}

BlockRule AttentionMask::rule(std::size_t row_segment, std::size_t col_segment) const {
    return rules_[row_segment * layout_.segment_count() + col_segment];
}

bool AttentionMask::allowed(std::size_t query, std::size_t key) const {
    if (!overrides_.empty()) {
        if (auto it = overrides_.find({query, key}); it != overrides_.end()) return it->second;
    }
    const std::size_t qs = layout_.segment_of(query);
    const std::size_t ks = layout_.segment_of(key);
    switch (rule(qs, ks)) {
        case BlockRule::Allowed: return true;
        case BlockRule::Blocked: return false;
        case BlockRule::Region: {
            const std::size_t image = layout_.image_segment();
            const std::size_t entity = qs == image ? ks : qs;
            const std::size_t token = (qs == image ? query : key) - layout_.segment_offset(image);
            return bitsets_[entity - 1][token] != 0;
        }
    }
    return false;
}

void AttentionMask::set(std::size_t query, std::size_t key, bool value) {
    if (query >= size() || key >= size()) throw Error(ErrorCode::InvalidArgument, "cell out of range");
    overrides_[{query, key}] = value;
}

std::vector<std::uint8_t> AttentionMask::materialize() const {
    const std::size_t n = size();
    std::vector<std::uint8_t> dense(n * n, 0);
    const std::size_t segs = layout_.segment_count();
    const std::size_t image = layout_.image_segment();
    const std::size_t image_offset = layout_.segment_offset(image);
    for (std::size_t rs = 0; rs < segs; ++rs) {
        const std::size_t r0 = layout_.segment_offset(rs);
        const std::size_t rn = layout_.segment_length(rs);
        for (std::size_t cs = 0; cs < segs; ++cs) {
            const std::size_t c0 = layout_.segment_offset(cs);
            const std::size_t cn = layout_.segment_length(cs);
            const BlockRule r = rule(rs, cs);
            for (std::size_t i = 0; i < rn; ++i) {
                for (std::size_t j = 0; j < cn; ++j) {
                    std::uint8_t v = r == BlockRule::Allowed ? 1 : 0;
                    if (r == BlockRule::Region) {
                        const bool row_is_image = rs == image;
                        const std::size_t entity = row_is_image ? cs : rs;
                        const std::size_t token = (row_is_image ? r0 + i : c0 + j) - image_offset;
                        v = bitsets_[entity - 1][token];
                    }
                    dense[(r0 + i) * n + c0 + j] = v;
                }
            }
        }
    }
    for (const auto& [cell, value] : overrides_) dense[cell.first * n + cell.second] = value ? 1 : 0;
    return dense;
}

AttentionMask build_attention_mask(const TokenLayout& layout, const std::vector<TokenBitset>& entity_bitsets,
                                   const AttentionMaskOptions& options) {
    layout.validate();
    if (entity_bitsets.size() != layout.entity_count()) {
        throw Error(ErrorCode::LengthMismatch, std::to_string(entity_bitsets.size()) + " bitsets for " +
                                                   std::to_string(layout.entity_count()) + " entities");
    }
    for (const auto& b : entity_bitsets) {
        if (b.size() != layout.n_image()) {
            throw Error(ErrorCode::LengthMismatch, "bitset length " + std::to_string(b.size()) +
                                                       " != n_image " + std::to_string(layout.n_image()));
        }
    }
    const std::size_t segs = layout.segment_count();
    const std::size_t image = layout.image_segment();
    std::vector<BlockRule> rules(segs * segs, BlockRule::Blocked);
    for (std::size_t a = 0; a < segs; ++a) {
        for (std::size_t b = 0; b < segs; ++b) {
            BlockRule r = BlockRule::Blocked;
            if (a == b) {
                r = BlockRule::Allowed;
            } else if (a == image || b == image) {
                const std::size_t other = a == image ? b : a;
                r = (other == 0 || other == layout.depth_segment()) ? BlockRule::Allowed : BlockRule::Region;
            } else if (a == 0 || b == 0) {
                r = options.global_isolated ? BlockRule::Blocked : BlockRule::Allowed;
            }
            rules[a * segs + b] = r;
        }
    }
    return AttentionMask(layout, entity_bitsets, options.global_isolated, std::move(rules));
}

namespace {

enum class Role { Global, Local, Depth, Image };

struct TokenRole {
    Role role;
    std::size_t entity = 0;       // Local: 0-based entity index
    std::size_t image_index = 0;  // Image: token index within X
    std::size_t segment = 0;
};

std::vector<TokenRole> token_roles(const TokenLayout& layout) {
    std::vector<TokenRole> roles;
    roles.reserve(layout.total());
    std::size_t segment = 0;
    for (std::size_t i = 0; i < layout.n_global; ++i) roles.push_back({Role::Global, 0, 0, segment});
    for (std::size_t j = 0; j < layout.n_local.size(); ++j) {
        ++segment;
        for (std::size_t i = 0; i < layout.n_local[j]; ++i) roles.push_back({Role::Local, j, 0, segment});
    }
    ++segment;
    for (std::size_t i = 0; i < layout.n_depth; ++i) roles.push_back({Role::Depth, 0, 0, segment});
    ++segment;
    for (std::size_t i = 0; i < layout.n_image(); ++i) roles.push_back({Role::Image, 0, i, segment});
    return roles;
}

std::string role_name(const TokenRole& r) {
    switch (r.role) {
        case Role::Global: return "P";
        case Role::Local: return "P_" + std::to_string(r.entity + 1);
        case Role::Depth: return "C_D";
        case Role::Image: return "X";
    }
    return "?";
}

struct Expectation {
    char rule;
    bool allowed;
};

Expectation expected_cell(const TokenRole& q, const TokenRole& k, const std::vector<TokenBitset>& bitsets,
                          bool global_isolated) {
    const bool q_image = q.role == Role::Image;
    const bool k_image = k.role == Role::Image;
    if (q_image && k_image) return {'e', true};
    if (q.segment == k.segment) return {'a', true};
    if (q_image || k_image) {
        const TokenRole& cond = q_image ? k : q;
        const TokenRole& img = q_image ? q : k;
        if (cond.role == Role::Local) return {'d', bitsets[cond.entity][img.image_index] != 0};
        return {'c', true};
    }
    // Both are prompt or depth tokens from different segments.
    if (q.role == Role::Global || k.role == Role::Global) return {'b', !global_isolated};
    return {'b', false};
}

}  // namespace

AuditReport audit_mask(const AttentionMask& mask) {
    AuditReport report;
    const auto roles = token_roles(mask.layout());
    const auto& bitsets = mask.entity_bitsets();
    const bool iso = mask.global_isolated();
    const std::size_t n = roles.size();
    const auto dense = mask.materialize();
    for (std::size_t q = 0; q < n; ++q) {
        for (std::size_t k = 0; k < n; ++k) {
            const auto exp = expected_cell(roles[q], roles[k], bitsets, iso);
            const bool actual = dense[q * n + k] != 0;
            if (actual != exp.allowed) {
                report.violations.push_back(
                    {q, k, role_name(roles[q]), role_name(roles[k]), exp.rule, actual, exp.allowed});
            }
        }
    }
    return report;
}

std::string serialize_audit(const AuditReport& report) {
    nlohmann::ordered_json out;
    out["ok"] = report.ok();
    out["violation_count"] = report.violations.size();
    auto list = nlohmann::ordered_json::array();
    for (const auto& v : report.violations) {
        nlohmann::ordered_json item;
        item["row"] = v.row;
        item["col"] = v.col;
        item["row_segment"] = v.row_segment;
        item["col_segment"] = v.col_segment;
        item["rule"] = std::string(1, v.rule);
        item["actual"] = v.actual;
        item["expected"] = v.expected;
        list.push_back(std::move(item));
    }
    out["violations"] = std::move(list);
    return out.dump(2);
}

std::string attention_mask_to_json(const AttentionMask& mask) {
    const auto& layout = mask.layout();
    nlohmann::ordered_json out;
    auto segments = nlohmann::ordered_json::array();
    for (std::size_t s = 0; s < layout.segment_count(); ++s) {
        segments.push_back({{"name", layout.segment_name(s)}, {"length", layout.segment_length(s)}});
    }
    out["segments"] = std::move(segments);
    out["grid"] = {layout.grid_width, layout.grid_height};
    out["patch_size"] = layout.patch_size;
    out["global_isolated"] = mask.global_isolated();
    auto blocked = nlohmann::ordered_json::array();
    for (std::size_t a = 0; a < layout.segment_count(); ++a) {
        for (std::size_t b = a + 1; b < layout.segment_count(); ++b) {
            if (mask.rule(a, b) == BlockRule::Blocked) {
                blocked.push_back({layout.segment_name(a), layout.segment_name(b)});
            }
        }
    }
    out["blocked_pairs"] = std::move(blocked);
    auto bitsets = nlohmann::ordered_json::array();
    for (const auto& b : mask.entity_bitsets()) bitsets.push_back(run_lengths(b));
    out["entity_bitsets"] = std::move(bitsets);
    auto overrides = nlohmann::ordered_json::array();
    for (const auto& [cell, value] : mask.overrides()) overrides.push_back({cell.first, cell.second, value ? 1 : 0});
    out["overrides"] = std::move(overrides);
    return out.dump();
}

AttentionMask attention_mask_from_json(std::string_view text) {
    using nlohmann::json;
    const json j = json::parse(text, nullptr, false);
    if (!j.is_object()) throw Error(ErrorCode::NoJsonFound, "attention mask JSON is not an object");
    for (const char* key : {"segments", "grid", "entity_bitsets"}) {
        if (!j.contains(key)) throw Error(ErrorCode::MissingKey, key);
    }
    const auto& segments = j["segments"];
    if (!segments.is_array() || segments.size() < 4) {
        throw Error(ErrorCode::TypeMismatch, "segments: expected [P, P_1.., C_D, X]");
    }
    TokenLayout layout;
    const std::size_t k = segments.size() - 3;
    layout.n_global = segments[0].at("length").get<std::size_t>();
    for (std::size_t i = 0; i < k; ++i) layout.n_local.push_back(segments[1 + i].at("length").get<std::size_t>());
    layout.n_depth = segments[k + 1].at("length").get<std::size_t>();
    layout.grid_width = j["grid"].at(0).get<int>();
    layout.grid_height = j["grid"].at(1).get<int>();
    layout.patch_size = j.value("patch_size", 1);
    layout.validate();
    if (segments[k + 2].at("length").get<std::size_t>() != layout.n_image()) {
        throw Error(ErrorCode::LengthMismatch, "X segment length != grid size");
    }
    for (std::size_t s = 0; s < layout.segment_count(); ++s) {
        if (segments[s].at("name").get<std::string>() != layout.segment_name(s)) {
            throw Error(ErrorCode::TypeMismatch, "unexpected segment name at position " + std::to_string(s));
        }
    }

    std::vector<TokenBitset> bitsets;
    for (const auto& rle : j["entity_bitsets"]) {
        bitsets.push_back(expand_runs(rle.get<std::vector<std::uint32_t>>(), layout.n_image()));
    }

    const std::size_t segs = layout.segment_count();
    auto index_of = [&](const std::string& name) {
        for (std::size_t s = 0; s < segs; ++s) {
            if (layout.segment_name(s) == name) return s;
        }
        throw Error(ErrorCode::TypeMismatch, "unknown segment " + name);
    };
    std::vector<BlockRule> rules(segs * segs, BlockRule::Allowed);
    const std::size_t image = layout.image_segment();
    for (std::size_t a = 0; a < segs; ++a) {
        for (std::size_t b = 0; b < segs; ++b) {
            const bool region = a != b && (a == image || b == image) && (std::min(a, b) >= 1) &&
                                std::min(a, b) <= layout.n_local.size();
            rules[a * segs + b] = region ? BlockRule::Region : BlockRule::Allowed;
        }
    }
    if (auto it = j.find("blocked_pairs"); it != j.end()) {
        for (const auto& pair : *it) {
            const auto a = index_of(pair.at(0).get<std::string>());
            const auto b = index_of(pair.at(1).get<std::string>());
            rules[a * segs + b] = BlockRule::Blocked;
            rules[b * segs + a] = BlockRule::Blocked;
        }
    }
    AttentionMask mask(layout, std::move(bitsets), j.value("global_isolated", true), std::move(rules));
    if (auto it = j.find("overrides"); it != j.end()) {
        for (const auto& cell : *it) {
            mask.set(cell.at(0).get<std::size_t>(), cell.at(1).get<std::size_t>(), cell.at(2).get<int>() != 0);
        }
    }
    return mask;
}

std::string attention_mask_to_pbm(const AttentionMask& mask) {
    const auto n = static_cast<int>(mask.size());
    EntityMask2D image(n, n);
    image.bits = mask.materialize();
    return encode_pbm(image);
}

namespace {

void check_attention_shapes(const Matrix& q, const Matrix& k, const Matrix& v, std::size_t mask_cells) {
    if (q.cols != k.cols || q.cols == 0 || k.rows != v.rows || mask_cells != q.rows * k.rows ||
        q.data.size() != q.rows * q.cols || k.data.size() != k.rows * k.cols || v.data.size() != v.rows * v.cols) {
        throw Error(ErrorCode::ShapeMismatch, "Q, K, V and M do not conform");
    }
}

}  // namespace

Matrix masked_attention(const Matrix& q, const Matrix& k, const Matrix& v, const std::vector<std::uint8_t>& mask) {
    check_attention_shapes(q, k, v, mask.size());
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
    Matrix out(q.rows, v.cols);
    std::vector<double> logits(k.rows);
    for (std::size_t i = 0; i < q.rows; ++i) {
        double peak = kNegInf;
        for (std::size_t j = 0; j < k.rows; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < q.cols; ++c) s += q(i, c) * k(j, c);
            // log M: 0 where allowed, -inf where blocked.
            logits[j] = s * scale + (mask[i * k.rows + j] ? 0.0 : kNegInf);
            peak = std::max(peak, logits[j]);
        }
        if (peak == kNegInf) throw Error(ErrorCode::InvalidArgument, "query row with no allowed key");
        double total = 0.0;
        for (auto& l : logits) {
            l = std::exp(l - peak);
            total += l;
        }
        for (std::size_t j = 0; j < k.rows; ++j) {
            const double w = logits[j] / total;
            if (w == 0.0) continue;
            for (std::size_t c = 0; c < v.cols; ++c) out(i, c) += w * v(j, c);
        }
    }
    return out;
}

Matrix masked_attention(const Matrix& q, const Matrix& k, const Matrix& v, const AttentionMask& mask) {
    return masked_attention(q, k, v, mask.materialize());
}

}  // namespace scenecond
