#include "excon/recovery.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "excon/error.hpp"
#include "text_util.hpp"

namespace excon {

namespace {

// Vector table with tolerance lookup. Entries are sorted by their projection
// onto a fixed pseudo-random unit direction; |<a - b, dir>| <= ||a - b||, so
// a tolerance window on the key contains every candidate match.
class VectorIndex {
public:
    VectorIndex(const std::vector<Vec>& items, double tol) : items_(items), tol_(tol) {
        if (items_.empty()) return;
        RngStream rng(0x5EEDu);
        dir_ = unit_sphere_point(rng, items_.front().size());
        order_.resize(items_.size());
        keys_.resize(items_.size());
        for (std::size_t i = 0; i < items_.size(); ++i) order_[i] = i;
        std::vector<double> raw(items_.size());
        for (std::size_t i = 0; i < items_.size(); ++i) raw[i] = dot(items_[i], dir_);
        std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
            return raw[a] < raw[b] || (raw[a] == raw[b] && a < b);
        });
        for (std::size_t i = 0; i < order_.size(); ++i) keys_[i] = raw[order_[i]];
    }

    // Index of the first stored item (in input order) within tol of v, or -1.
    long find(std::span<const double> v) const {
        if (items_.empty()) return -1;
        const double key = dot(v, dir_);
        auto lo = std::lower_bound(keys_.begin(), keys_.end(), key - tol_);
        long best = -1;
        for (auto it = lo; it != keys_.end() && *it <= key + tol_; ++it) {
            const std::size_t idx = order_[static_cast<std::size_t>(it - keys_.begin())];
            if (distance(items_[idx], v) <= tol_ && (best < 0 || static_cast<long>(idx) < best)) {
                best = static_cast<long>(idx);
            }
        }
        return best;
    }

private:
    const std::vector<Vec>& items_;
    double tol_;
    Vec dir_;
    std::vector<std::size_t> order_;
    std::vector<double> keys_;
};

// Drops zero vectors and tolerance duplicates, keeping first occurrences.
std::vector<Vec> distinct_nonzero(const std::vector<Vec>& M, double tol, bool* saw_zero = nullptr) {
    std::vector<Vec> kept;
    for (const Vec& v : M) {
        if (norm(v) <= tol) {
            if (saw_zero) *saw_zero = true;
            continue;
        }
        // Quadratic only in the number of distinct values seen, which stays at
        // 2^m for the inputs this module is meant for.
        bool dup = false;
        for (const Vec& k : kept) {
            if (distance(k, v) <= tol) {
                dup = true;
                break;
            }
        }
        if (!dup) kept.push_back(v);
    }
    return kept;
}

enum : unsigned char { kSingle = 1, kMulti = 2 };

struct BasisScan {
    std::vector<std::size_t> basis;   // indices into the distinct list
    std::vector<unsigned char> flag;  // kSingle: in B; kMulti: in S
};

void add_to_span(const std::vector<Vec>& items, const VectorIndex& index, std::size_t x,
                 std::vector<unsigned char>& flag) {
    std::vector<std::size_t> reached;
    for (std::size_t i = 0; i < flag.size(); ++i) {
        if (flag[i]) reached.push_back(i);
    }
    for (std::size_t y : reached) {
        const long z = index.find(add(items[y], items[x]));
        if (z >= 0) flag[static_cast<std::size_t>(z)] |= kMulti;
    }
    flag[x] |= kSingle;
}

BasisScan scan(const std::vector<Vec>& items, double tol) {
    const VectorIndex index(items, tol);
    BasisScan st;
    st.flag.assign(items.size(), 0);
    for (std::size_t x = 0; x < items.size(); ++x) {
        if (st.flag[x] & kMulti) continue;  // already a sum of two or more candidates
        st.basis.push_back(x);
        add_to_span(items, index, x, st.flag);

        // Candidates that are themselves sums of other candidates leave B; S is
        // then rebuilt from the survivors. Every partial sum of a valid subset
        // sum lies in M, so tracking S only inside M loses nothing.
        std::vector<std::size_t> survivors;
        for (std::size_t b : st.basis) {
            if (!(st.flag[b] & kMulti)) survivors.push_back(b);
        }
        if (survivors.size() != st.basis.size()) {
            st.basis = survivors;
            std::fill(st.flag.begin(), st.flag.end(), 0);
            for (std::size_t b : st.basis) add_to_span(items, index, b, st.flag);
        }
    }
    return st;
}

bool structure_ok(const std::vector<Vec>& items, const BasisScan& st) {
    if (st.basis.size() >= 63) return false;
    if (items.size() + 1 != (std::size_t{1} << st.basis.size())) return false;
    return std::all_of(st.flag.begin(), st.flag.end(), [](unsigned char f) { return f != 0; });
}

}  // namespace

double default_eq_tol(const std::vector<Vec>& M) {
    double mx = 0.0;
    for (const Vec& v : M) mx = std::max(mx, norm(v));
    return mx > 0.0 ? 1e-9 * mx : 1e-12;
}

BasisSet identify_basis(const std::vector<Vec>& M, double eq_tol) {
    if (!(eq_tol > 0.0)) throw DomainError("identify_basis: eq_tol must be positive");
    if (!M.empty()) {
        for (const Vec& v : M) {
            if (v.size() != M.front().size()) throw DomainError("identify_basis: unequal dimensions");
        }
    }
    const std::vector<Vec> items = distinct_nonzero(M, eq_tol);
    const BasisScan st = scan(items, eq_tol);
    if (!structure_ok(items, st)) {
        throw StructureError("identify_basis: " + std::to_string(items.size() + 1) +
                             " distinct values do not form the subset sums of " +
                             std::to_string(st.basis.size()) + " independent vectors");
    }
    BasisSet out;
    for (std::size_t b : st.basis) out.push_back(items[b]);
    return out;
}

BasisSet identify_basis(const std::vector<Vec>& M) { return identify_basis(M, default_eq_tol(M)); }

RecoveryResult recover_two_layer_detailed(const std::vector<GradientSample>& samples,
                                          std::optional<double> eq_tol) {
    if (samples.empty()) throw CoverageError("recover_two_layer: no gradient samples");
    const std::size_t d = samples.front().x.size();
    std::vector<Vec> grads;
    grads.reserve(samples.size());
    for (const GradientSample& s : samples) {
        if (s.x.size() != d || s.g.size() != d) throw DomainError("recover_two_layer: dimension mismatch");
        grads.push_back(s.g);
    }
    const double tol = eq_tol.value_or(default_eq_tol(grads));
    if (!(tol > 0.0)) throw DomainError("recover_two_layer: eq_tol must be positive");

    bool saw_zero = false;
    const std::vector<Vec> items = distinct_nonzero(grads, tol, &saw_zero);
    if (items.empty()) throw CoverageError("recover_two_layer: every sample gradient is zero");
    const BasisScan st = scan(items, tol);
    const std::size_t m = st.basis.size();
    if (m > 20) throw StructureError("recover_two_layer: more than 20 candidate nodes");

    // Subset sums of the candidate basis; mask -> index of the distinct value.
    const VectorIndex index(items, tol);
    const std::size_t full = std::size_t{1} << m;
    std::vector<long> value_of_mask(full, -1);
    std::vector<Vec> sums(full, Vec(d, 0.0));
    std::vector<std::size_t> missing;
    for (std::size_t mask = 1; mask < full; ++mask) {
        const std::size_t low = static_cast<std::size_t>(__builtin_ctzll(mask));
        sums[mask] = add(sums[mask & (mask - 1)], items[st.basis[low]]);
        value_of_mask[mask] = index.find(sums[mask]);
        if (value_of_mask[mask] < 0) missing.push_back(mask);
    }
    if (!missing.empty()) {
        std::string list;
        for (std::size_t i = 0; i < missing.size() && i < 16; ++i) {
            std::string bits(m, '0');
            for (std::size_t j = 0; j < m; ++j) {
                if (missing[i] >> j & 1) bits[j] = '1';
            }
            list += (i ? ", " : "") + bits;
        }
        if (missing.size() > 16) list += ", ...";
        throw CoverageError("recover_two_layer: " + std::to_string(missing.size()) +
                            " activation pattern(s) never observed: " + list);
    }
    if (!structure_ok(items, st)) {
        throw StructureError("recover_two_layer: distinct gradients are not a subset-sum family");
    }
    std::vector<std::size_t> mask_of_item(items.size(), 0);
    for (std::size_t mask = 1; mask < full; ++mask) {
        mask_of_item[static_cast<std::size_t>(value_of_mask[mask])] = mask;
    }

    Vec outer(m);
    std::vector<Vec> rows(m);
    for (std::size_t j = 0; j < m; ++j) {
        const Vec& v = items[st.basis[j]];
        outer[j] = norm(v);
        rows[j] = scaled(v, 1.0 / outer[j]);
    }

    std::vector<std::size_t> agree(m, 0), disagree(m, 0);
    std::size_t boundary = 0;
    for (const GradientSample& s : samples) {
        std::size_t mask = 0;
        if (norm(s.g) > tol) {
            const long idx = index.find(s.g);
            if (idx < 0) throw StructureError("recover_two_layer: sample gradient outside the family");
            mask = mask_of_item[static_cast<std::size_t>(idx)];
        }
        bool on_boundary = false;
        for (std::size_t j = 0; j < m; ++j) {
            const double a = dot(rows[j], s.x);
            if (std::abs(a) <= 1e-12) {
                on_boundary = true;
                continue;
            }
            const bool participates = (mask >> j) & 1;
            ((a > 0.0) == participates ? agree : disagree)[j]++;
        }
        if (on_boundary) ++boundary;
    }
    for (std::size_t j = 0; j < m; ++j) {
        if (agree[j] && disagree[j]) {
            throw InconsistencyError("recover_two_layer: node " + std::to_string(j) +
                                     " has an inconsistent activation sign (" + std::to_string(agree[j]) +
                                     " vs " + std::to_string(disagree[j]) + " samples)");
        }
        if (!agree[j] && !disagree[j]) {
            throw InconsistencyError("recover_two_layer: node " + std::to_string(j) +
                                     " has no sample off its boundary");
        }
        if (disagree[j]) {
            outer[j] = -outer[j];
            for (double& v : rows[j]) v = -v;
        }
    }

    TwoLayerRelu model(outer, rows);
    double residual = 0.0;
    for (const GradientSample& s : samples) {
        residual = std::max(residual, distance(input_gradient(model, s.x), s.g));
    }
    if (residual > tol) {
        throw InconsistencyError("recover_two_layer: recovered model misses a sample gradient by " +
                                 detail::format_real(residual, false));
    }
    return RecoveryResult{std::move(model), items.size() + (saw_zero ? 1 : 0),
                          items.size() + (saw_zero ? 1 : 0), boundary, residual};
}

TwoLayerRelu recover_two_layer(const std::vector<GradientSample>& samples, std::optional<double> eq_tol) {
    return recover_two_layer_detailed(samples, eq_tol).model;
}

std::size_t coverage_sample_size(std::size_t m_nodes, double p_min, double delta) {
    if (!(p_min > 0.0 && p_min < 1.0)) throw DomainError("coverage_sample_size: p_min must lie in (0, 1)");
    if (!(delta > 0.0 && delta < 1.0)) throw DomainError("coverage_sample_size: delta must lie in (0, 1)");
    const double num = static_cast<double>(m_nodes) * std::log(2.0) + std::log(1.0 / delta);
    const double den = -std::log1p(-p_min);
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(num / den)));
}

void write_gradient_samples(std::ostream& out, const std::vector<GradientSample>& samples, bool hex) {
    const std::size_t d = samples.empty() ? 0 : samples.front().x.size();
    for (std::size_t i = 0; i < d; ++i) out << (i ? "," : "") << "x_" << i;
    for (std::size_t i = 0; i < d; ++i) out << ",g_" << i;
    out << '\n';
    for (const GradientSample& s : samples) {
        if (s.x.size() != d || s.g.size() != d) throw DomainError("write_gradient_samples: dimension mismatch");
        for (std::size_t i = 0; i < d; ++i) out << (i ? "," : "") << detail::format_real(s.x[i], hex);
        for (std::size_t i = 0; i < d; ++i) out << ',' << detail::format_real(s.g[i], hex);
        out << '\n';
    }
}

std::vector<GradientSample> read_gradient_samples(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::size_t d = 0;
    bool have_header = false;
    std::vector<GradientSample> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const std::vector<std::string> cells = detail::split_commas(line);
        if (!have_header) {
            if (cells.size() % 2 != 0) throw SchemaError("gradient samples: header needs x_i and g_i columns");
            d = cells.size() / 2;
            for (std::size_t i = 0; i < d; ++i) {
                if (cells[i] != "x_" + std::to_string(i) || cells[d + i] != "g_" + std::to_string(i)) {
                    throw SchemaError("gradient samples: unexpected header column '" + cells[i] + "'");
                }
            }
            have_header = true;
            continue;
        }
        if (cells.size() != 2 * d) {
            throw SchemaError("line " + std::to_string(line_no) + ": expected " + std::to_string(2 * d) +
                              " fields, got " + std::to_string(cells.size()));
        }
        GradientSample s{Vec(d), Vec(d)};
        for (std::size_t i = 0; i < d; ++i) {
            s.x[i] = detail::parse_real(cells[i], line_no);
            s.g[i] = detail::parse_real(cells[d + i], line_no);
        }
        out.push_back(std::move(s));
    }
    if (!have_header) throw SchemaError("gradient samples: missing header");
    return out;
}

}  // namespace excon
