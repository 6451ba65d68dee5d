#include "ssda2/losses.hpp"

#include <cstdio>
#include <stdexcept>

namespace ssda2 {

void aggregate(LossReport& r, const LossWeights& w) {
  r.gen_total = w.l_rec * r.rec + w.l_adv * r.adv_gen + w.l_cyc * r.cyc + w.l_per * r.per +
                w.l_con * r.con_gen;
  r.dis_total = w.l_adv * r.adv_dis + w.l_con * r.con_dis;
}

std::string loss_log_header() {
  return "iter\tlr\trec\tadv_gen\tadv_dis\tcyc\tper\tcon_gen\tcon_dis\tgen_total\tdis_total";
}

std::string loss_log_line(std::int64_t iter, double lr, const LossReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%lld\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g\t%.17g",
                static_cast<long long>(iter), lr, r.rec, r.adv_gen, r.adv_dis, r.cyc, r.per,
                r.con_gen, r.con_dis, r.gen_total, r.dis_total);
  return buf;
}

TranslationOutputs run_generator(const Generator& g, const Var& a1, const Var& b) {
  TranslationOutputs o;
  o.enc_a1 = g.encode(a1);
  o.enc_b = g.encode(b);
  o.rec_a1 = g.decode(o.enc_a1);
  o.rec_b = g.decode(o.enc_b);
  o.fake_ab = g.decode(g.mix(o.enc_a1, o.enc_b));
  o.fake_ba = g.decode(g.mix(o.enc_b, o.enc_a1));
  // Cycle: content re-encoded from each translation, style taken from the
  // other direction's translation.
  const Encoded enc_ab = g.encode(o.fake_ab);
  const Encoded enc_ba = g.encode(o.fake_ba);
  o.cyc_a1 = g.decode(g.mix(enc_ab, enc_ba));
  o.cyc_b = g.decode(g.mix(enc_ba, enc_ab));
  return o;
}

namespace {

Var squared_off(const Var& score, double label) {
  return square(label == 0.0 ? score : add_scalar(score, -label));
}

}  // namespace

Var adv_dis_from_scores(const Var& real_a1, const Var& real_b, const Var& fake_ab,
                        const Var& fake_ba) {
  // Per batch element: real scores pulled to 0, translated scores to 1;
  // the four squared offsets are summed, then averaged over the batch.
  const Var sum = add(add(squared_off(real_a1, 0.0), squared_off(real_b, 0.0)),
                      add(squared_off(fake_ab, 1.0), squared_off(fake_ba, 1.0)));
  return mean_all(sum);
}

Var adv_gen_from_scores(const Var& fake_ab, const Var& fake_ba) {
  return mean_all(add(squared_off(fake_ab, 0.0), squared_off(fake_ba, 0.0)));
}

Var contrastive_from_sims(const Var& pos, const Var& neg, bool per_anchor) {
  if (!pos->value.same_shape(neg->value))
    throw std::invalid_argument("contrastive_from_sims: shape mismatch " +
                                pos->value.shape_str() + " vs " + neg->value.shape_str());
  if (per_anchor) {
    // mean_i [ log(e^{pos_i} + e^{neg_i}) - pos_i ]
    const Var denom = log_v(add(exp_v(pos), exp_v(neg)));
    return mean_all(sub(denom, pos));
  }
  // log( sum_j e^{pos_j} + sum_j e^{neg_j} ) - mean_i pos_i
  const Var denom = log_v(add(sum_all(exp_v(pos)), sum_all(exp_v(neg))));
  return sub(denom, mean_all(pos));
}

Var loss_rec(const TranslationOutputs& o, const Var& a1, const Var& b) {
  return add(smooth_l1(o.rec_a1, a1), smooth_l1(o.rec_b, b));
}

Var loss_cyc(const TranslationOutputs& o, const Var& a1, const Var& b) {
  return add(smooth_l1(o.cyc_a1, a1), smooth_l1(o.cyc_b, b));
}

Var loss_per(const PerceptualNet& per, const TranslationOutputs& o, const Var& a1, const Var& b) {
  const Var fa1 = per.features(a1);
  const Var fb = per.features(b);
  const Var t1 = mse(per.features(o.rec_a1), fa1);
  const Var t2 = mse(per.features(o.rec_b), fb);
  const Var t3 = mse(per.features(o.cyc_a1), fa1);
  const Var t4 = mse(per.features(o.cyc_b), fb);
  return add(add(t1, t2), add(t3, t4));
}

Var loss_adv_dis(const Discriminator& f, const Var& a1, const Var& b, const Var& fake_ab,
                 const Var& fake_ba) {
  return adv_dis_from_scores(f.forward(a1).realness, f.forward(b).realness,
                             f.forward(fake_ab).realness, f.forward(fake_ba).realness);
}

Var loss_adv_gen(const Discriminator& f, const Var& fake_ab, const Var& fake_ba) {
  return adv_gen_from_scores(f.forward(fake_ab).realness, f.forward(fake_ba).realness);
}

Var loss_con_dis(const Discriminator& f, const Var& a1, const Var& a2, const Var& fake_ab,
                 bool per_anchor) {
  const Var emb_a1 = f.forward(a1).embedding;
  const Var pos = rowdot(emb_a1, f.forward(a2).embedding);
  const Var neg = rowdot(emb_a1, f.forward(fake_ab).embedding);
  return contrastive_from_sims(pos, neg, per_anchor);
}

Var loss_con_gen(const Discriminator& f, const Var& fake_ab, const Var& b, const Var& a2,
                 bool per_anchor) {
  const Var emb_ab = f.forward(fake_ab).embedding;
  const Var pos = rowdot(emb_ab, f.forward(b).embedding);
  const Var neg = rowdot(emb_ab, f.forward(a2).embedding);
  return contrastive_from_sims(pos, neg, per_anchor);
}

Var weighted_gen_total(const LossWeights& w, const Var& rec, const Var& adv_gen, const Var& cyc,
                       const Var& per, const Var& con_gen) {
  Var total = add(scale(rec, w.l_rec), scale(adv_gen, w.l_adv));
  total = add(total, scale(cyc, w.l_cyc));
  total = add(total, scale(per, w.l_per));
  return add(total, scale(con_gen, w.l_con));
}

Var weighted_dis_total(const LossWeights& w, const Var& adv_dis, const Var& con_dis) {
  return add(scale(adv_dis, w.l_adv), scale(con_dis, w.l_con));
}

}  // namespace ssda2
