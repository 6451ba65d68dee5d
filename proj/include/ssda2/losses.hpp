#pragma once

#include <cstdint>
#include <string>

#include "ssda2/autograd.hpp"
#include "ssda2/nets.hpp"

namespace ssda2 {

/// Term weights of the two training objectives:
///   gen_total = l_rec*rec + l_adv*adv_gen + l_cyc*cyc + l_per*per + l_con*con_gen
///   dis_total = l_adv*adv_dis + l_con*con_dis
struct LossWeights {
  double l_rec = 50.0;
  double l_adv = 5.0;
  double l_cyc = 50.0;
  double l_per = 1.0;
  double l_con = 1.0;

  bool operator==(const LossWeights&) const = default;
};

/// Scalar value of every term plus the weighted aggregates for one step.
struct LossReport {
  double rec = 0.0;
  double adv_gen = 0.0;
  double adv_dis = 0.0;
  double cyc = 0.0;
  double per = 0.0;
  double con_gen = 0.0;
  double con_dis = 0.0;
  double gen_total = 0.0;
  double dis_total = 0.0;
  bool per_pretrained = false;
};

/// Fills the aggregates from the term fields.
void aggregate(LossReport& r, const LossWeights& w);

/// Tab-separated per-iteration log line (full double precision).
std::string loss_log_header();
std::string loss_log_line(std::int64_t iter, double lr, const LossReport& r);

/// Everything the generator produces from one (content twin, style) batch
/// pair: self-reconstructions, cross-style translations, and the cycle
/// reconstructions whose style is taken from the *other* translated image.
struct TranslationOutputs {
  Encoded enc_a1, enc_b;
  Var rec_a1, rec_b;    // self-styled reconstructions of a1 / b
  Var fake_ab, fake_ba; // a1 restyled as b, b restyled as a1
  Var cyc_a1, cyc_b;    // round trips back to a1 / b styling
};

TranslationOutputs run_generator(const Generator& g, const Var& a1, const Var& b);

// ---- score/similarity-level losses (exact formulas, oracle-testable) ----

/// Discriminator objective on realness scores (batch column vectors); the
/// label convention is real -> 0, translated -> 1.
Var adv_dis_from_scores(const Var& real_a1, const Var& real_b, const Var& fake_ab,
                        const Var& fake_ba);

/// Generator adversarial objective: pull translated scores to the real label.
Var adv_gen_from_scores(const Var& fake_ab, const Var& fake_ba);

/// Contrastive loss over positive/negative similarity vectors (length N).
/// Default form uses the batch-global denominator
///   log(sum_j e^{pos_j} + sum_j e^{neg_j}) - mean_i pos_i,
/// which equals log(2N) when every similarity coincides. The per-anchor
/// variant replaces the global denominator with e^{pos_i} + e^{neg_i}.
Var contrastive_from_sims(const Var& pos, const Var& neg, bool per_anchor = false);

// ---- net-level losses ----

/// smooth L1 of both self-reconstructions against their originals.
Var loss_rec(const TranslationOutputs& o, const Var& a1, const Var& b);

/// smooth L1 of both cycle reconstructions against their originals.
Var loss_cyc(const TranslationOutputs& o, const Var& a1, const Var& b);

/// Four mean-squared feature distances through the frozen extractor:
/// (rec_a1, a1), (rec_b, b), (cyc_a1, a1), (cyc_b, b).
Var loss_per(const PerceptualNet& per, const TranslationOutputs& o, const Var& a1, const Var& b);

/// Realness-score losses; callers pass detached translations for the
/// discriminator update.
Var loss_adv_dis(const Discriminator& f, const Var& a1, const Var& b, const Var& fake_ab,
                 const Var& fake_ba);
Var loss_adv_gen(const Discriminator& f, const Var& fake_ab, const Var& fake_ba);

/// Discriminator contrastive term: positives pair the twin views
/// (a1_i, a2_i), negatives pair each a1_j with its translation fake_ab_j.
Var loss_con_dis(const Discriminator& f, const Var& a1, const Var& a2, const Var& fake_ab,
                 bool per_anchor = false);

/// Generator contrastive term: positives pair each translation with its
/// style source (fake_ab_i, b_i), negatives pair it with the twin view
/// (fake_ab_j, a2_j).
Var loss_con_gen(const Discriminator& f, const Var& fake_ab, const Var& b, const Var& a2,
                 bool per_anchor = false);

// ---- weighted aggregates as graph nodes ----

Var weighted_gen_total(const LossWeights& w, const Var& rec, const Var& adv_gen, const Var& cyc,
                       const Var& per, const Var& con_gen);
Var weighted_dis_total(const LossWeights& w, const Var& adv_dis, const Var& con_dis);

}  // namespace ssda2
