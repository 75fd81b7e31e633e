"""Mixture-of-experts sequence-to-sequence question generator.

Passage and answer run through direction-shared BiLSTM encoders (separate
parameter sets per encoder); the decoder is an LSTM whose input fuses the
previous word, an additive-attention context over passage states, an
expert embedding, and a soft-template context chosen by noisy top-K
gating over the per-level template bank. Output is a pointer-generator
mix of vocabulary softmax and copy attention over the passage, scored on
an extended vocabulary that includes passage-only tokens.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, no_grad
from .data import EOS_ID, SOS_ID, UNK_ID, Vocab
from .estimator import ComplexityLabel

CHECKPOINT_VERSION = 1
LEVELS = (ComplexityLabel.SIMPLE, ComplexityLabel.COMPLEX)


def level_index(d: ComplexityLabel) -> int:
    return 0 if d is ComplexityLabel.SIMPLE else 1


@dataclass(frozen=True)
class ModelConfig:
    n_z: int = 3
    n_pi: int = 12
    top_k: int = 4
    d_complexity: int = 30
    d_expert: int = 50
    d_template: int = 50
    hidden: int = 256
    d_word: int = 128
    max_decode_len: int = 30
    use_moe: bool = True
    use_templates: bool = True
    length_normalize: bool = False

    def __post_init__(self):
        if not 1 <= self.top_k <= self.n_pi:
            raise ValueError(
                f"top_k must lie in [1, n_pi], got K={self.top_k} n_pi={self.n_pi}"
            )
        dims = (self.n_z, self.d_complexity, self.d_expert, self.d_template,
                self.hidden, self.d_word, self.max_decode_len)
        if min(dims) < 1:
            raise ValueError(f"all dimensions must be >= 1, got {dims}")
        if self.hidden % 2 != 0:
            raise ValueError("hidden must be even (split across directions)")

    def to_dict(self) -> dict:
        return {
            "n_z": self.n_z, "n_pi": self.n_pi, "top_k": self.top_k,
            "d_complexity": self.d_complexity, "d_expert": self.d_expert,
            "d_template": self.d_template, "hidden": self.hidden,
            "d_word": self.d_word, "max_decode_len": self.max_decode_len,
            "use_moe": self.use_moe, "use_templates": self.use_templates,
            "length_normalize": self.length_normalize,
        }

    @classmethod
    def from_dict(cls, values: dict) -> "ModelConfig":
        return cls(**values)


@dataclass
class EncoderOutput:
    states: Tensor        # (n_passage, hidden), one row per position
    h_final: Tensor       # (1, hidden), last per-position passage state
    e_a: Tensor           # (1, hidden), concatenated final answer states


@dataclass
class DecoderState:
    h: Tensor             # (1, hidden)
    c: Tensor             # (1, hidden)
    c_x: Tensor | None = None
    c_pi: Tensor | None = None
    alpha: Tensor | None = None
    emb_y: Tensor | None = None
    t: int = 0


@dataclass(frozen=True)
class PreparedInstance:
    """Token ids and extended-vocabulary bookkeeping for one example."""

    passage_ids: list[int]        # encoder input ids (OOV -> UNK)
    answer_ids: list[int]
    decoder_in_ids: list[int]     # SOS + gold question ids (OOV -> UNK)
    target_ext_ids: list[int]     # gold question extended ids + EOS
    passage_ext_ids: list[int]    # per passage position, extended id
    oov_tokens: list[str]         # extension tokens in first-seen order
    n_ext: int


def _seeded_rng(seed: int, name: str) -> np.random.Generator:
    digest = hashlib.sha256(f"{seed}:{name}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def vocab_sha256(vocab: Vocab) -> str:
    payload = "\n".join(vocab.id_to_token).encode("utf-8")
    return hashlib.sha256(payload).hexdigest()


class CCQGModel:
    """Owns the parameter dictionary and all forward computations.

    Parameter initialization draws each array from a generator seeded by
    (seed, parameter name), so arrays whose shapes do not involve n_z are
    identical across expert counts; the ablation contract relies on this.
    """

    def __init__(self, config: ModelConfig, vocab: Vocab, seed: int = 0):
        self.config = config
        self.vocab = vocab
        self.seed = seed
        self.noise_rng = _seeded_rng(seed, "gate_noise")
        h = config.hidden
        h2 = h // 2
        dw = config.d_word
        dc = config.d_complexity
        dz = config.d_expert
        dt = config.d_template
        v = len(vocab)
        u_dim = 2 * h + dc + dz      # gate input [c_x, e_a, e_d, e_z]
        s0_dim = 2 * h + dc + dz     # init input [h_final, e_a, e_d, e_z]
        dec_in_dim = dw + h + dt + dz
        shapes = {
            "word_emb": (v, dw),
            "enc_p_W": (dw + h2, 4 * h2), "enc_p_b": (1, 4 * h2),
            "enc_a_W": (dw + h2, 4 * h2), "enc_a_b": (1, 4 * h2),
            "d_emb": (2, dc),
            "e_z": (config.n_z, dz),
            "tpl_simple": (config.n_pi, dt),
            "tpl_complex": (config.n_pi, dt),
            "s0_h_W": (s0_dim, h), "s0_h_b": (1, h),
            "s0_c_W": (s0_dim, h), "s0_c_b": (1, h),
            "att_Ws": (h, h), "att_Wh": (h, h), "att_v": (h, 1),
            "gate_W": (u_dim, config.n_pi),
            "gate_noise_W": (u_dim, config.n_pi),
            "dec_in_W": (dec_in_dim, dw), "dec_in_b": (1, dw),
            "dec_W": (dw + h, 4 * h), "dec_b": (1, 4 * h),
            "out_W": (2 * h, v), "out_b": (1, v),
            "ptr_wc": (h, 1), "ptr_ws": (h, 1), "ptr_wy": (dw, 1),
            "ptr_b": (1, 1),
        }
        self.params: dict[str, Tensor] = {}
        for name, shape in shapes.items():
            if name.endswith("_b"):
                values = np.zeros(shape)
            else:
                values = _seeded_rng(seed, name).normal(0.0, 0.1, size=shape)
            self.params[name] = Tensor(values, requires_grad=True)

    # ---- encoders ----

    def _lstm_direction(self, emb: Tensor, w: Tensor, b: Tensor,
                        reverse: bool) -> list[Tensor]:
        h2 = self.config.hidden // 2
        n = emb.shape[0]
        h = Tensor(np.zeros((1, h2)))
        c = Tensor(np.zeros((1, h2)))
        order = range(n - 1, -1, -1) if reverse else range(n)
        states: list[Tensor] = [None] * n
        for t in order:
            x = ad.rows(emb, t, t + 1)
            z = ad.concat([x, h], axis=1) @ w + b
            i = ad.sigmoid(ad.cols(z, 0, h2))
            f = ad.sigmoid(ad.cols(z, h2, 2 * h2))
            g = ad.tanh(ad.cols(z, 2 * h2, 3 * h2))
            o = ad.sigmoid(ad.cols(z, 3 * h2, 4 * h2))
            c = ad.add(ad.mul(f, c), ad.mul(i, g))
            h = ad.mul(o, ad.tanh(c))
            states[t] = h
        return states

    def bilstm_encode(self, ids: list[int], which: str) -> tuple[Tensor, Tensor]:
        """Per-position states (n, hidden) and the direction-final summary.

        Both directions share one cell parameterization per encoder, so
        reversing the input swaps the forward/backward halves.
        """
        if not ids:
            raise ValueError(f"bilstm_encode: empty {which} sequence")
        if which not in ("passage", "answer"):
            raise ValueError(f"bilstm_encode: unknown encoder {which!r}")
        w = self.params[f"enc_{which[0]}_W"]
        b = self.params[f"enc_{which[0]}_b"]
        emb = ad.embedding(self.params["word_emb"], ids)
        fw = self._lstm_direction(emb, w, b, reverse=False)
        bw = self._lstm_direction(emb, w, b, reverse=True)
        per_pos = [ad.concat([f, k], axis=1) for f, k in zip(fw, bw)]
        states = per_pos[0] if len(per_pos) == 1 else ad.concat(per_pos, axis=0)
        summary = ad.concat([fw[-1], bw[0]], axis=1)
        return states, summary

    def encode(self, passage_ids: list[int], answer_ids: list[int]) -> EncoderOutput:
        states, _ = self.bilstm_encode(passage_ids, "passage")
        _, e_a = self.bilstm_encode(answer_ids, "answer")
        n = states.shape[0]
        h_final = ad.rows(states, n - 1, n)
        return EncoderOutput(states=states, h_final=h_final, e_a=e_a)

    # ---- conditioning vectors ----

    def _e_d(self, d: ComplexityLabel) -> Tensor:
        return ad.embedding(self.params["d_emb"], [level_index(d)])

    def _e_z(self, z: int) -> Tensor:
        if not 0 <= z < self.config.n_z:
            raise ValueError(f"expert index {z} out of range [0, {self.config.n_z})")
        if not self.config.use_moe:
            return Tensor(np.zeros((1, self.config.d_expert)))
        return ad.embedding(self.params["e_z"], [z])

    def attention_context(self, s_prev: Tensor, states: Tensor) -> tuple[Tensor, Tensor]:
        """Additive attention: score_i = v^T tanh(W_s s + W_h h_i)."""
        proj = ad.add(
            ad.matmul(states, self.params["att_Wh"]),
            ad.matmul(s_prev, self.params["att_Ws"]),
        )
        scores = ad.transpose(ad.matmul(ad.tanh(proj), self.params["att_v"]))
        alpha = ad.softmax(scores)            # (1, n)
        c_x = ad.matmul(alpha, states)        # (1, hidden)
        return c_x, alpha

    def init_decoder_state(self, enc: EncoderOutput, d: ComplexityLabel,
                           z: int) -> DecoderState:
        x = ad.concat([enc.h_final, enc.e_a, self._e_d(d), self._e_z(z)], axis=1)
        h = ad.tanh(x @ self.params["s0_h_W"] + self.params["s0_h_b"])
        c = ad.tanh(x @ self.params["s0_c_W"] + self.params["s0_c_b"])
        return DecoderState(h=h, c=c, t=0)

    def template_context(self, c_x: Tensor, e_a: Tensor, d: ComplexityLabel,
                         z: int, noisy: bool) -> tuple[Tensor, Tensor]:
        """Noisy top-K gate over the level-d template bank.

        Returns the aggregated template context and the dense gate-weight
        row (zeros outside the kept support).
        """
        cfg = self.config
        if not cfg.use_templates:
            zeros = Tensor(np.zeros((1, cfg.d_template)))
            return zeros, Tensor(np.zeros((1, cfg.n_pi)))
        u = ad.concat([c_x, e_a, self._e_d(d), self._e_z(z)], axis=1)
        logits = ad.matmul(u, self.params["gate_W"])
        if noisy:
            scale = ad.softplus(ad.matmul(u, self.params["gate_noise_W"]))
            xi = Tensor(self.noise_rng.standard_normal((1, cfg.n_pi)))
            logits = ad.add(logits, ad.mul(xi, scale))
        order = np.argsort(-logits.data[0], kind="stable")
        dropped = order[cfg.top_k:]
        mask = np.zeros((1, cfg.n_pi))
        mask[0, dropped] = -np.inf
        weights = ad.softmax(ad.add(logits, Tensor(mask)))
        bank = self.params["tpl_simple" if level_index(d) == 0 else "tpl_complex"]
        c_pi = ad.matmul(weights, bank)
        return c_pi, weights

    # ---- decoding ----

    def _embed_input(self, token_id: int) -> Tensor:
        idx = token_id if token_id < len(self.vocab) else UNK_ID
        return ad.embedding(self.params["word_emb"], [idx])

    def decoder_step(self, y_prev: int, state: DecoderState, enc: EncoderOutput,
                     d: ComplexityLabel, z: int, noisy: bool) -> DecoderState:
        cfg = self.config
        c_x, alpha = self.attention_context(state.h, enc.states)
        c_pi, _ = self.template_context(c_x, enc.e_a, d, z, noisy)
        emb_y = self._embed_input(y_prev)
        fused = ad.concat([emb_y, c_x, c_pi, self._e_z(z)], axis=1)
        x = fused @ self.params["dec_in_W"] + self.params["dec_in_b"]
        h = cfg.hidden
        zcat = ad.concat([x, state.h], axis=1) @ self.params["dec_W"] + self.params["dec_b"]
        i = ad.sigmoid(ad.cols(zcat, 0, h))
        f = ad.sigmoid(ad.cols(zcat, h, 2 * h))
        g = ad.tanh(ad.cols(zcat, 2 * h, 3 * h))
        o = ad.sigmoid(ad.cols(zcat, 3 * h, 4 * h))
        c_new = ad.add(ad.mul(f, state.c), ad.mul(i, g))
        h_new = ad.mul(o, ad.tanh(c_new))
        return DecoderState(h=h_new, c=c_new, c_x=c_x, c_pi=c_pi,
                            alpha=alpha, emb_y=emb_y, t=state.t + 1)

    def output_distribution(self, state: DecoderState, passage_ext_ids: list[int],
                            n_ext: int) -> Tensor:
        """Pointer-generator mix over the extended vocabulary; sums to 1."""
        p_vocab = ad.softmax(
            ad.concat([state.h, state.c_x], axis=1) @ self.params["out_W"]
            + self.params["out_b"]
        )
        p_gen = ad.sigmoid(
            state.c_x @ self.params["ptr_wc"]
            + state.h @ self.params["ptr_ws"]
            + state.emb_y @ self.params["ptr_wy"]
            + self.params["ptr_b"]
        )
        gen_part = ad.mul(p_vocab, p_gen)
        n_oov = n_ext - len(self.vocab)
        if n_oov > 0:
            gen_part = ad.concat([gen_part, Tensor(np.zeros((1, n_oov)))], axis=1)
        copy_weights = ad.mul(state.alpha, ad.scalar(1.0) - p_gen)
        copy_part = ad.scatter_sum(copy_weights, passage_ext_ids, n_ext)
        return ad.add(gen_part, copy_part)

    # ---- sequence-level preparation and likelihoods ----

    def prepare(self, passage_tokens: list[str], answer_tokens: list[str],
                question_tokens: list[str]) -> PreparedInstance:
        if not passage_tokens:
            raise ValueError("prepare: empty passage")
        if not answer_tokens:
            raise ValueError("prepare: empty answer")
        vocab = self.vocab
        oov_tokens: list[str] = []
        ext_of: dict[str, int] = {}
        passage_ext_ids = []
        for token in passage_tokens:
            idx = vocab.id(token)
            if idx == UNK_ID and token != vocab.token(UNK_ID):
                if token not in ext_of:
                    ext_of[token] = len(vocab) + len(oov_tokens)
                    oov_tokens.append(token)
                idx = ext_of[token]
            passage_ext_ids.append(idx)
        decoder_in = [SOS_ID] + [vocab.id(t) for t in question_tokens]
        target_ext = [
            ext_of.get(t, vocab.id(t)) if vocab.id(t) == UNK_ID else vocab.id(t)
            for t in question_tokens
        ] + [EOS_ID]
        return PreparedInstance(
            passage_ids=[vocab.id(t) for t in passage_tokens],
            answer_ids=[vocab.id(t) for t in answer_tokens],
            decoder_in_ids=decoder_in,
            target_ext_ids=target_ext,
            passage_ext_ids=passage_ext_ids,
            oov_tokens=oov_tokens,
            n_ext=len(vocab) + len(oov_tokens),
        )

    def sequence_log_prob(self, prep: PreparedInstance, d: ComplexityLabel,
                          z: int, noisy: bool = False) -> Tensor:
        """Teacher-forced log p(Y | X, A, d, z) as a (1,1) tensor."""
        enc = self.encode(prep.passage_ids, prep.answer_ids)
        state = self.init_decoder_state(enc, d, z)
        total = ad.scalar(0.0)
        for y_in, y_out in zip(prep.decoder_in_ids, prep.target_ext_ids):
            state = self.decoder_step(y_in, state, enc, d, z, noisy)
            dist = self.output_distribution(state, prep.passage_ext_ids, prep.n_ext)
            total = ad.add(total, ad.log(ad.gather(dist, y_out)))
        return total

    def mixture_log_prob(self, prep: PreparedInstance, d: ComplexityLabel,
                         noisy: bool = False) -> Tensor:
        """log p(Y | X, A, d) under the uniform 1/n_z expert prior."""
        per_expert = [
            self.sequence_log_prob(prep, d, z, noisy)
            for z in range(self.config.n_z)
        ]
        row = per_expert[0] if len(per_expert) == 1 else ad.concat(per_expert, axis=1)
        return ad.add(ad.logsumexp(row), ad.scalar(-float(np.log(self.config.n_z))))

    # ---- generation ----

    def _greedy_decode(self, prep: PreparedInstance, d: ComplexityLabel,
                       z: int) -> tuple[list[int], float]:
        enc = self.encode(prep.passage_ids, prep.answer_ids)
        state = self.init_decoder_state(enc, d, z)
        prev = SOS_ID
        out_ids: list[int] = []
        score = 0.0
        for _ in range(self.config.max_decode_len):
            state = self.decoder_step(prev, state, enc, d, z, noisy=False)
            dist = self.output_distribution(state, prep.passage_ext_ids, prep.n_ext)
            chosen = int(np.argmax(dist.data[0]))
            score += float(np.log(dist.data[0, chosen]))
            if chosen == EOS_ID:
                break
            out_ids.append(chosen)
            prev = chosen
        return out_ids, score

    def _ext_id_to_token(self, idx: int, oov_tokens: list[str]) -> str:
        if idx < len(self.vocab):
            return self.vocab.token(idx)
        return oov_tokens[idx - len(self.vocab)]

    def generate(self, passage_tokens: list[str], answer_tokens: list[str],
                 d: ComplexityLabel) -> tuple[list[str], int, list[float]]:
        """Greedy decode per expert; keep the highest-scoring candidate.

        Scores are raw joint log-probabilities unless length_normalize is
        set; expert ties resolve to the lowest index.
        """
        prep = self.prepare(passage_tokens, answer_tokens, question_tokens=[])
        candidates: list[list[int]] = []
        scores: list[float] = []
        with no_grad():
            for z in range(self.config.n_z):
                ids, score = self._greedy_decode(prep, d, z)
                if self.config.length_normalize and ids:
                    score /= len(ids) + 1  # EOS counted
                candidates.append(ids)
                scores.append(score)
        best = int(np.argmax(scores))  # argmax keeps the lowest tied index
        tokens = [self._ext_id_to_token(i, prep.oov_tokens) for i in candidates[best]]
        return tokens, best, scores

    # ---- persistence ----

    def save(self, path: str | Path) -> None:
        payload = {
            "format_version": CHECKPOINT_VERSION,
            "config": self.config.to_dict(),
            "seed": self.seed,
            "vocab_sha256": vocab_sha256(self.vocab),
            "levels": [d.value for d in LEVELS],
            "params": {
                name: {
                    "shape": list(p.data.shape),
                    "values": p.data.reshape(-1).tolist(),
                }
                for name, p in sorted(self.params.items())
            },
        }
        Path(path).write_text(
            json.dumps(payload, sort_keys=True, indent=1) + "\n", encoding="utf-8",
        )

    @classmethod
    def load(cls, path: str | Path, vocab: Vocab) -> "CCQGModel":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if payload.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"{path}: unsupported checkpoint version "
                f"{payload.get('format_version')!r}"
            )
        if payload["vocab_sha256"] != vocab_sha256(vocab):
            raise ValueError(f"{path}: checkpoint was built with a different vocabulary")
        model = cls(ModelConfig.from_dict(payload["config"]), vocab,
                    seed=payload.get("seed", 0))
        for name, entry in payload["params"].items():
            if name not in model.params:
                raise ValueError(f"{path}: unknown parameter {name!r}")
            shape = tuple(entry["shape"])
            if shape != model.params[name].data.shape:
                raise ValueError(
                    f"{path}: parameter {name!r} shape {shape} does not match "
                    f"config-derived {model.params[name].data.shape}"
                )
            model.params[name].data[...] = np.array(
                entry["values"], dtype=np.float64,
            ).reshape(shape)
        return model
