use lbo_core::distance::normalized_levenshtein;
use lbo_core::inversion::{invert, InversionSettings};
use lbo_core::seed;
use lbo_core::tasks::sequence_task;
use lbo_core::vae::{decode_argmax, encode, init_params, train_vae, VaeDims};

fn main() {
    let task = sequence_task("target-string").unwrap();
    let dims = VaeDims { vocab: 16, max_len: 16, latent: 8, hidden: 64, embed: 64 };
    let corpus: Vec<_> = task.corpus.iter().take(24).cloned().collect();
    for (ep, s) in [(1200usize, 9u64), (1500, 9), (1200, 5), (1500, 5)] {
        let mut rng = seed::rng(s, "mid-vae", 0);
        let tr = train_vae(&init_params(dims, &mut rng), &corpus, ep, 1.5, 0.01, &mut rng).unwrap();
        let (mut enc, mut inv, mut gain) = (0, 0, 0);
        for x in &corpus {
            let (m, _) = encode(&tr, x);
            let d = normalized_levenshtein(x, &decode_argmax(&tr, &m));
            if d == 0.0 { enc += 1; }
            let r = invert(&tr, x, &InversionSettings::default()).unwrap();
            if r.converged { inv += 1; if d > 0.0 { gain += 1; } }
        }
        println!("ep={ep} stream=mid-vae/{s}: enc={enc}/24 inv={inv}/24 recovered={gain}");
    }
}
