#pragma once

// Re-ID retrieval metrics (mAP, CMC) over a query/gallery split.

#include "sskd/model.hpp"
#include "sskd/synthdata.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace sskd {

/// Query and gallery rows of one dataset plus the ground truth for every
/// row. Gallery entries sharing both identity and camera with a query are
/// excluded for that query.
struct RetrievalProtocol {
    std::vector<Index> query;
    std::vector<Index> gallery;
    std::vector<int> identities; ///< per dataset row
    std::vector<int> cameras;    ///< per dataset row
};

/// Per identity, one randomly chosen sample of every camera becomes a query;
/// the remaining samples form the gallery. Requires identities on all rows.
RetrievalProtocol split_query_gallery(const Dataset &data, std::uint64_t seed);

struct EvalReport {
    double mAP = 0;
    double cmc1 = 0, cmc5 = 0, cmc10 = 0;
    std::vector<double> cmc;       ///< cmc[r] = fraction of queries matched within rank r+1
    std::vector<double> ap;        ///< per evaluated query, in protocol order
    std::vector<Index> evaluated;  ///< dataset row of each evaluated query
    std::size_t skipped = 0;

    std::string to_json(bool with_timestamp = false) const;
};

/// Unit-norm representations of `x` under the encoder; no augmentation.
Matrix extract_features(const PeerModel &model, const Matrix &x);

/// Cosine ranking per query with ties broken by gallery order. AP is the mean
/// of precision@r over the ranks r of relevant items; queries with no valid
/// gallery entry or no relevant item are skipped and counted.
EvalReport evaluate(const RetrievalProtocol &protocol, const Matrix &features);

/// `query_index,ap` rows.
void write_ap_csv(const std::string &path, const EvalReport &report);

} // namespace sskd
