#pragma once

// Corpus analytics: session statistics, log-odds lexical salience with an
// informative Dirichlet prior, TF-IDF document vectors with cosine-similarity
// histograms, 2-D PCA, and distinct-n.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "chataug/core.hpp"
#include "chataug/io.hpp"
#include "chataug/linalg.hpp"

namespace chataug {

// ---------------------------------------------------------------------------
// Corpus statistics

struct RoleStats {
    std::size_t utterances = 0;
    std::size_t tokens = 0;
    double avg_per_session = 0.0;
    double avg_tokens = 0.0;
};

struct CorpusStats {
    std::size_t sessions = 0;
    std::size_t total_tokens = 0;
    std::size_t total_utterances = 0;
    double avg_session_tokens = 0.0;
    double avg_utterances_per_session = 0.0;
    double avg_utterance_tokens = 0.0;
    RoleStats seeker;
    RoleStats supporter;
};

/// Exact integer partial sums, so shard merges reproduce the totals.
struct CorpusStatsAccumulator {
    std::size_t sessions = 0;
    std::size_t tokens = 0;
    std::size_t utterances = 0;
    std::array<std::size_t, 2> role_utterances{};
    std::array<std::size_t, 2> role_tokens{};

    void add(const Dialogue& d, bool drop_leading_supporter) {
        ++sessions;
        bool seen_seeker = false;
        for (const auto& u : d.utterances) {
            if (u.speaker == Speaker::Seeker) seen_seeker = true;
            if (drop_leading_supporter && !seen_seeker) continue;
            const std::size_t n = token_count(u.text);
            ++utterances;
            tokens += n;
            const auto r = static_cast<std::size_t>(u.speaker);
            ++role_utterances[r];
            role_tokens[r] += n;
        }
    }

    void merge(const CorpusStatsAccumulator& o) {
        sessions += o.sessions;
        tokens += o.tokens;
        utterances += o.utterances;
        for (std::size_t i = 0; i < 2; ++i) {
            role_utterances[i] += o.role_utterances[i];
            role_tokens[i] += o.role_tokens[i];
        }
    }

    CorpusStats finish() const {
        if (sessions == 0) throw std::invalid_argument("corpus_stats: empty corpus");
        CorpusStats s;
        s.sessions = sessions;
        s.total_tokens = tokens;
        s.total_utterances = utterances;
        const double ns = static_cast<double>(sessions);
        s.avg_session_tokens = static_cast<double>(tokens) / ns;
        s.avg_utterances_per_session = static_cast<double>(utterances) / ns;
        s.avg_utterance_tokens =
            utterances == 0 ? 0.0 : static_cast<double>(tokens) / static_cast<double>(utterances);
        auto fill = [&](RoleStats& r, std::size_t idx) {
            r.utterances = role_utterances[idx];
            r.tokens = role_tokens[idx];
            r.avg_per_session = static_cast<double>(r.utterances) / ns;
            r.avg_tokens =
                r.utterances == 0 ? 0.0
                                  : static_cast<double>(r.tokens) / static_cast<double>(r.utterances);
        };
        fill(s.seeker, static_cast<std::size_t>(Speaker::Seeker));
        fill(s.supporter, static_cast<std::size_t>(Speaker::Supporter));
        return s;
    }
};

/// When `drop_leading_supporter` is set, supporter utterances before each
/// dialogue's first seeker utterance are excluded from every figure.
inline CorpusStats corpus_stats(std::span<const Dialogue> corpus, bool drop_leading_supporter) {
    CorpusStatsAccumulator acc;
    for (const auto& d : corpus) acc.add(d, drop_leading_supporter);
    return acc.finish();
}

inline void to_json(json& j, const RoleStats& r) {
    j = json{{"utterances", r.utterances},
             {"tokens", r.tokens},
             {"avg_per_session", r.avg_per_session},
             {"avg_tokens", r.avg_tokens}};
}

inline void to_json(json& j, const CorpusStats& s) {
    j = json{{"sessions", s.sessions},
             {"total_tokens", s.total_tokens},
             {"total_utterances", s.total_utterances},
             {"avg_session_tokens", s.avg_session_tokens},
             {"avg_utterances_per_session", s.avg_utterances_per_session},
             {"avg_utterance_tokens", s.avg_utterance_tokens},
             {"per_role", json{{"seeker", s.seeker}, {"supporter", s.supporter}}}};
}

// ---------------------------------------------------------------------------
// Log-odds salience (informative Dirichlet prior)

/// Ordered map keeps every downstream ranking deterministic.
using TermCounts = std::map<std::string, std::size_t>;

inline std::string lowercase_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out)
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    return out;
}

struct TermCountOptions {
    bool lowercase = true;
    std::set<std::string> stop_words;  // empty = keep everything
};

inline TermCounts term_counts(std::span<const Dialogue> corpus,
                              const TermCountOptions& opts = {}) {
    TermCounts counts;
    for (const auto& d : corpus) {
        for (const auto& u : d.utterances) {
            for (auto& tok : tokenize(u.text)) {
                std::string term = opts.lowercase ? lowercase_ascii(tok) : tok;
                if (opts.stop_words.contains(term)) continue;
                ++counts[std::move(term)];
            }
        }
    }
    return counts;
}

struct DirichletPrior {
    std::map<std::string, double> alpha;
    double alpha0 = 0.0;
};

/// Uniform prior: alpha_w = alpha for each vocabulary term.
inline DirichletPrior make_uniform_prior(const std::set<std::string>& vocab, double alpha) {
    if (!(alpha > 0)) throw std::invalid_argument("prior alpha must be positive");
    DirichletPrior p;
    for (const auto& term : vocab) p.alpha[term] = alpha;
    p.alpha0 = alpha * static_cast<double>(vocab.size());
    return p;
}

/// Informative prior: alpha_w proportional to the term's combined-corpus
/// count, scaled so the alphas sum to alpha0.
inline DirichletPrior make_informative_prior(const TermCounts& combined, double alpha0 = 1000.0) {
    if (!(alpha0 > 0)) throw std::invalid_argument("prior alpha0 must be positive");
    if (combined.empty()) throw std::invalid_argument("prior vocabulary is empty");
    double total = 0.0;
    for (const auto& [term, count] : combined) {
        if (count == 0) throw std::invalid_argument("prior term has zero combined count: " + term);
        total += static_cast<double>(count);
    }
    DirichletPrior p;
    p.alpha0 = alpha0;
    for (const auto& [term, count] : combined)
        p.alpha[term] = alpha0 * static_cast<double>(count) / total;
    return p;
}

struct SalienceEntry {
    std::string term;
    double delta = 0.0;
    double variance = 0.0;
    double z = 0.0;
    std::size_t count_a = 0;
    std::size_t count_b = 0;
};

inline void to_json(json& j, const SalienceEntry& e) {
    j = json{{"term", e.term},         {"delta", e.delta},       {"variance", e.variance},
             {"z", e.z},               {"count_a", e.count_a},   {"count_b", e.count_b}};
}

/// Monroe et al.'s log-odds-ratio with informative Dirichlet prior over the
/// union vocabulary of both count maps. Corpus sizes n_a, n_b are the sums
/// of the supplied counts. Result is sorted by descending z (ties by term),
/// i.e. terms most distinctive of corpus A first.
inline std::vector<SalienceEntry> log_odds_salience(const TermCounts& counts_a,
                                                    const TermCounts& counts_b,
                                                    const DirichletPrior& prior) {
    std::set<std::string> vocab;
    double n_a = 0.0, n_b = 0.0;
    for (const auto& [term, c] : counts_a) {
        vocab.insert(term);
        n_a += static_cast<double>(c);
    }
    for (const auto& [term, c] : counts_b) {
        vocab.insert(term);
        n_b += static_cast<double>(c);
    }
    if (vocab.empty()) throw std::invalid_argument("salience: combined vocabulary is empty");

    std::vector<SalienceEntry> entries;
    entries.reserve(vocab.size());
    for (const auto& term : vocab) {
        auto pa = prior.alpha.find(term);
        if (pa == prior.alpha.end() || !(pa->second > 0))
            throw std::invalid_argument("salience: term missing from prior: " + term);
        const double alpha_w = pa->second;
        auto count_of = [](const TermCounts& m, const std::string& t) -> std::size_t {
            auto it = m.find(t);
            return it == m.end() ? 0 : it->second;
        };
        const double y_a = static_cast<double>(count_of(counts_a, term));
        const double y_b = static_cast<double>(count_of(counts_b, term));
        SalienceEntry e;
        e.term = term;
        e.count_a = static_cast<std::size_t>(y_a);
        e.count_b = static_cast<std::size_t>(y_b);
        e.delta = std::log((y_a + alpha_w) / (n_a + prior.alpha0 - y_a - alpha_w)) -
                  std::log((y_b + alpha_w) / (n_b + prior.alpha0 - y_b - alpha_w));
        e.variance = 1.0 / (y_a + alpha_w) + 1.0 / (y_b + alpha_w);
        e.z = e.delta / std::sqrt(e.variance);
        entries.push_back(std::move(e));
    }
    std::sort(entries.begin(), entries.end(), [](const SalienceEntry& x, const SalienceEntry& y) {
        if (x.z != y.z) return x.z > y.z;
        return x.term < y.term;
    });
    return entries;
}

struct SalienceOptions {
    bool lowercase = true;
    std::size_t min_combined_count = 2;
    std::set<std::string> stop_words;
    double alpha0 = 1000.0;
    std::size_t top_k = 30;
};

struct SalienceComparison {
    std::vector<SalienceEntry> top_a;  // most distinctive of corpus A, z descending
    std::vector<SalienceEntry> top_b;  // most distinctive of corpus B, from B's perspective
};

/// Tokenize both corpora, restrict to terms whose combined count meets the
/// minimum, build the informative prior over that vocabulary, and keep the
/// top-k per side. Entries in `top_b` are re-signed so their z is positive
/// from corpus B's point of view.
inline SalienceComparison compare_salience(std::span<const Dialogue> corpus_a,
                                           std::span<const Dialogue> corpus_b,
                                           const SalienceOptions& opts = {}) {
    TermCountOptions tc{opts.lowercase, opts.stop_words};
    TermCounts a = term_counts(corpus_a, tc);
    TermCounts b = term_counts(corpus_b, tc);
    TermCounts combined;
    for (const auto& [t, c] : a) combined[t] += c;
    for (const auto& [t, c] : b) combined[t] += c;
    TermCounts fa, fb, fc;
    for (const auto& [t, c] : combined) {
        if (c < opts.min_combined_count) continue;
        fc[t] = c;
        if (auto it = a.find(t); it != a.end()) fa[t] = it->second;
        if (auto it = b.find(t); it != b.end()) fb[t] = it->second;
    }
    if (fc.empty()) throw std::invalid_argument("salience: no term passes the combined-count minimum");
    const DirichletPrior prior = make_informative_prior(fc, opts.alpha0);
    auto ranked = log_odds_salience(fa, fb, prior);

    SalienceComparison out;
    const std::size_t k = std::min(opts.top_k, ranked.size());
    out.top_a.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t i = 0; i < k; ++i) {
        SalienceEntry e = ranked[ranked.size() - 1 - i];
        e.delta = -e.delta;
        e.z = -e.z;
        std::swap(e.count_a, e.count_b);
        out.top_b.push_back(std::move(e));
    }
    return out;
}

// ---------------------------------------------------------------------------
// TF-IDF and diversity

struct TfidfMatrix {
    std::vector<std::string> vocab;  // sorted; column t is vocab[t]
    std::vector<std::vector<std::pair<std::uint32_t, double>>> rows;  // sparse, l2-normalized

    std::size_t docs() const { return rows.size(); }
};

/// tf = raw count; idf = ln((1+N)/(1+df)) + 1; rows l2-normalized
/// (all-empty documents stay zero rows).
inline TfidfMatrix tfidf_matrix(const std::vector<std::vector<std::string>>& documents) {
    if (documents.empty()) throw std::invalid_argument("tfidf: empty corpus");
    const std::size_t n_docs = documents.size();

    std::map<std::string, std::size_t> df;
    for (const auto& doc : documents) {
        std::set<std::string_view> seen;
        for (const auto& tok : doc) seen.insert(tok);
        for (auto tok : seen) ++df[std::string(tok)];
    }

    TfidfMatrix m;
    m.vocab.reserve(df.size());
    std::vector<double> idf;
    idf.reserve(df.size());
    for (const auto& [term, freq] : df) {
        m.vocab.push_back(term);
        idf.push_back(std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + static_cast<double>(freq))) +
                      1.0);
    }
    std::unordered_map<std::string_view, std::uint32_t> term_id;
    term_id.reserve(m.vocab.size());
    for (std::uint32_t t = 0; t < m.vocab.size(); ++t) term_id.emplace(m.vocab[t], t);

    m.rows.reserve(n_docs);
    for (const auto& doc : documents) {
        std::map<std::uint32_t, double> tf;
        for (const auto& tok : doc) tf[term_id.at(tok)] += 1.0;
        std::vector<std::pair<std::uint32_t, double>> row;
        row.reserve(tf.size());
        double norm_sq = 0.0;
        for (const auto& [t, count] : tf) {
            const double w = count * idf[t];
            norm_sq += w * w;
            row.emplace_back(t, w);
        }
        if (norm_sq > 0) {
            const double inv = 1.0 / std::sqrt(norm_sq);
            for (auto& [t, w] : row) w *= inv;
        }
        m.rows.push_back(std::move(row));
    }
    return m;
}

/// One document per dialogue: the concatenated token streams of its
/// utterances, lowercased by default.
inline TfidfMatrix tfidf_matrix(std::span<const Dialogue> corpus, bool lowercase = true) {
    std::vector<std::vector<std::string>> documents;
    documents.reserve(corpus.size());
    for (const auto& d : corpus) {
        std::vector<std::string> doc;
        for (const auto& u : d.utterances) {
            for (auto& tok : tokenize(u.text))
                doc.push_back(lowercase ? lowercase_ascii(tok) : std::move(tok));
        }
        documents.push_back(std::move(doc));
    }
    return tfidf_matrix(documents);
}

/// Dot product of two sparse rows; equals cosine similarity because rows are
/// unit length (zero rows yield 0).
inline double row_dot(const std::vector<std::pair<std::uint32_t, double>>& a,
                      const std::vector<std::pair<std::uint32_t, double>>& b) {
    double s = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i].first < b[j].first) {
            ++i;
        } else if (a[i].first > b[j].first) {
            ++j;
        } else {
            s += a[i].second * b[j].second;
            ++i;
            ++j;
        }
    }
    return s;
}

struct Histogram {
    std::size_t bins = 0;
    std::vector<std::size_t> counts;
    std::size_t samples = 0;

    double bin_lo(std::size_t b) const { return static_cast<double>(b) / static_cast<double>(bins); }
    double bin_hi(std::size_t b) const {
        return static_cast<double>(b + 1) / static_cast<double>(bins);
    }
};

inline void to_json(json& j, const Histogram& h) {
    j = json{{"bins", h.bins}, {"counts", h.counts}, {"samples", h.samples}};
}

/// Cosine similarity over all N(N-1)/2 unordered document pairs, binned
/// uniformly over [0,1]; exact 1.0 lands in the top bin.
inline Histogram pairwise_similarity_histogram(const TfidfMatrix& m, std::size_t bins) {
    if (m.docs() < 2) throw std::invalid_argument("histogram: need at least 2 documents");
    if (bins == 0) throw std::invalid_argument("histogram: bins must be >= 1");
    Histogram h;
    h.bins = bins;
    h.counts.assign(bins, 0);
    const std::size_t n = m.docs();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double v = row_dot(m.rows[i], m.rows[j]);
            if (v < 0.0) v = 0.0;
            if (v > 1.0) v = 1.0;
            auto b = static_cast<std::size_t>(v * static_cast<double>(bins));
            if (b >= bins) b = bins - 1;
            ++h.counts[b];
            ++h.samples;
        }
    }
    return h;
}

// ---------------------------------------------------------------------------
// PCA

struct Pca2d {
    std::vector<std::array<double, 2>> scores;   // one (x, y) per document
    std::array<double, 2> explained_variance{};  // descending
};

namespace detail {

/// Shared tail: eigendecompose the double-centered Gram matrix, build
/// scores, fix signs so each component's largest-magnitude loading is
/// positive. `loading` maps a document-space vector u to X^T u.
template <typename LoadingFn>
Pca2d pca2d_from_gram(SymMatrix gram, LoadingFn&& loading) {
    const std::size_t n = gram.n;
    if (n < 3) throw std::invalid_argument("pca_2d: need at least 3 documents");

    // double-center: K = H G H with H = I - 11^T/n
    std::vector<double> row_mean(n, 0.0);
    double total_mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += gram.at(i, j);
        row_mean[i] = s / static_cast<double>(n);
        total_mean += s;
    }
    total_mean /= static_cast<double>(n) * static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            gram.at(i, j) -= row_mean[i] + row_mean[j] - total_mean;

    constexpr std::size_t kJacobiCutoff = 320;
    EigenPairs eig;
    if (n <= kJacobiCutoff) {
        eig = jacobi_eigen(gram);
        eig.values.resize(2);
        eig.vectors.resize(2);
    } else {
        eig = top_eigenpairs_psd(gram, 2);
    }

    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(gram.at(i, i)));
    const double rank_tol = std::max(scale, 1.0) * 1e-12;
    if (eig.values[0] <= rank_tol)
        throw std::invalid_argument("pca_2d: degenerate spectrum (all documents identical)");

    Pca2d out;
    out.scores.assign(n, {0.0, 0.0});
    for (std::size_t comp = 0; comp < 2; ++comp) {
        double lambda = std::max(eig.values[comp], 0.0);
        if (lambda <= rank_tol) {
            out.explained_variance[comp] = 0.0;
            continue;  // rank-1 data: the second coordinate stays 0
        }
        auto& u = eig.vectors[comp];
        std::vector<double> load = loading(u);
        double best = 0.0;
        for (double v : load)
            if (std::abs(v) > std::abs(best)) best = v;
        if (best < 0)
            for (double& v : u) v = -v;
        const double s = std::sqrt(lambda);
        for (std::size_t i = 0; i < n; ++i) out.scores[i][comp] = s * u[i];
        out.explained_variance[comp] = lambda / static_cast<double>(n - 1);
    }
    return out;
}

}  // namespace detail

/// PCA of the sparse TF-IDF rows via the document-side Gram matrix.
inline Pca2d pca_2d(const TfidfMatrix& m) {
    const std::size_t n = m.docs();
    SymMatrix gram(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            const double v = row_dot(m.rows[i], m.rows[j]);
            gram.at(i, j) = v;
            gram.at(j, i) = v;
        }
    }
    return detail::pca2d_from_gram(std::move(gram), [&](const std::vector<double>& u) {
        std::vector<double> load(m.vocab.size(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (const auto& [t, w] : m.rows[i]) load[t] += u[i] * w;
        return load;
    });
}

/// PCA of dense rows (documents × features).
inline Pca2d pca_2d(const std::vector<std::vector<double>>& rows) {
    const std::size_t n = rows.size();
    if (n < 3) throw std::invalid_argument("pca_2d: need at least 3 documents");
    const std::size_t dim = rows.front().size();
    for (const auto& r : rows)
        if (r.size() != dim) throw std::invalid_argument("pca_2d: ragged matrix");
    SymMatrix gram(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double s = 0.0;
            for (std::size_t t = 0; t < dim; ++t) s += rows[i][t] * rows[j][t];
            gram.at(i, j) = s;
            gram.at(j, i) = s;
        }
    }
    return detail::pca2d_from_gram(std::move(gram), [&](const std::vector<double>& u) {
        std::vector<double> load(dim, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < dim; ++t) load[t] += u[i] * rows[i][t];
        return load;
    });
}

// ---------------------------------------------------------------------------
// Distinct-n

enum class DistinctScope { Supporter, All };

/// Unique / total n-gram ratio. N-grams are taken inside each utterance's
/// token sequence (no straddling across utterances) and pooled over the
/// corpus; 0 when no utterance yields an n-gram.
inline double distinct_n(std::span<const Dialogue> corpus, std::size_t n,
                         DistinctScope scope = DistinctScope::Supporter) {
    if (n == 0) throw std::invalid_argument("distinct_n: n must be >= 1");
    std::unordered_set<std::string> unique;
    std::size_t total = 0;
    for (const auto& d : corpus) {
        for (const auto& u : d.utterances) {
            if (scope == DistinctScope::Supporter && u.speaker != Speaker::Supporter) continue;
            const auto toks = tokenize(u.text);
            if (toks.size() < n) continue;
            for (std::size_t i = 0; i + n <= toks.size(); ++i) {
                std::string gram;
                for (std::size_t k = 0; k < n; ++k) {
                    if (k) gram.push_back('\x1f');
                    gram += toks[i + k];
                }
                unique.insert(std::move(gram));
                ++total;
            }
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(total);
}

}  // namespace chataug
