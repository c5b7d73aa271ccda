mod common;

use common::*;
use hyperexplain::explainer::{cf_loss, explain_detailed, init_state, SearchScope, INIT_LOGIT};
use hyperexplain::model::{self, NodeFeatures};
use hyperexplain::{diffmath::sigmoid, explain, Error, ExplainConfig, Hypergraph, MaskVariant, Removal};

const VARIANTS: [MaskVariant; 2] = [MaskVariant::Nhp, MaskVariant::Hp];

#[test]
fn distance_term_alone_has_closed_form_value_and_gradient() {
    // zero weights make the prediction term the constant log(1/C)
    let inst = random_instance(3, 8, 5, 0.4);
    let params = inst.params.zeros_like();
    let node = connected_node(&inst.h, 0).unwrap();
    let hops = params.num_layers();
    for variant in VARIANTS {
        let view = inst.h.extract_subhypergraph(node, hops).unwrap();
        let mut state = init_state(&view, variant, hops).unwrap();
        state.tunable_logits = (0..state.len()).map(|i| 0.5 + i as f64 * 0.7).collect();
        let beta = 0.3;
        let (loss, grad) = cf_loss(&inst.h, &inst.x, &params, node, &state, beta, 0.5, hops).unwrap();
        let c = params.num_classes() as f64;
        let want: f64 = -(c.ln()) + beta * state.tunable_logits.iter().map(|&t| 1.0 - sigmoid(t)).sum::<f64>();
        assert!((loss - want).abs() < 1e-12, "{variant}: {loss} vs {want}");
        for (g, &t) in grad.iter().zip(&state.tunable_logits) {
            let s = sigmoid(t);
            assert!((g + beta * s * (1.0 - s)).abs() < 1e-12);
        }
    }
}

#[test]
fn gated_off_loss_is_distance_only() {
    // logits far below the threshold remove everything; with a model that
    // flips on that removal the prediction term is switched off
    for seed in 0..60 {
        let inst = random_instance(seed, 10, 6, 0.35);
        let node = match connected_node(&inst.h, seed as usize) {
            Some(n) => n,
            None => continue,
        };
        let hops = inst.params.num_layers();
        let view = inst.h.extract_subhypergraph(node, hops).unwrap();
        let mut state = init_state(&view, MaskVariant::Hp, hops).unwrap();
        state.tunable_logits.iter_mut().for_each(|t| *t = -4.0);
        let all: Vec<usize> = state.tunable_edges.iter().map(|&e| view.edge_map[e]).collect();
        let clean = model::predict(&inst.h, &inst.x, &inst.params, node).unwrap().0;
        let cut = model::predict(&Removal::Edges(all).apply(&inst.h).unwrap(), &inst.x, &inst.params, node).unwrap().0;
        if clean == cut {
            continue;
        }
        let (loss, _) = cf_loss(&inst.h, &inst.x, &inst.params, node, &state, 1.0, 0.5, hops).unwrap();
        let want = state.len() as f64 * (1.0 - sigmoid(-4.0));
        assert!((loss - want).abs() < 1e-12);
        return;
    }
    panic!("no instance flipped under full removal");
}

#[test]
fn found_explanations_are_valid_and_deterministic() {
    let cfg = ExplainConfig::default();
    let mut found = 0;
    for seed in 0..12 {
        let inst = random_instance(100 + seed, 12, 7, 0.3);
        let node = match connected_node(&inst.h, seed as usize) {
            Some(n) => n,
            None => continue,
        };
        let hops = inst.params.num_layers();
        for variant in VARIANTS {
            let a = explain_detailed(&inst.h, &inst.x, &inst.params, node, variant, &cfg).unwrap();
            let b = explain_detailed(&inst.h, &inst.x, &inst.params, node, variant, &cfg).unwrap();
            let clean = argmax(&dense_logits(&inst.h, &inst.x, &inst.params, None)[node]);
            assert_eq!(a.original_class, clean);
            assert_eq!(a.search_space, tunable_items(&inst.h, node, variant, hops).len());
            let (Some(ra), Some(rb)) = (&a.result, &b.result) else {
                assert_eq!(a.result.is_none(), b.result.is_none());
                continue;
            };
            assert_eq!((&ra.removal, ra.found_at_iteration, ra.new_class), (&rb.removal, rb.found_at_iteration, rb.new_class));
            assert!(ra.verify(&inst.h, &inst.x, &inst.params).unwrap());
            let after = argmax(&dense_logits(&ra.removal.apply(&inst.h).unwrap(), &inst.x, &inst.params, None)[node]);
            assert_eq!(after, ra.new_class);
            assert_ne!(after, clean);
            assert_eq!(ra.size, ra.removal.len());
            assert!(ra.size >= 1 && ra.found_at_iteration >= 1 && ra.found_at_iteration <= cfg.iterations);
            let items = tunable_items(&inst.h, node, variant, hops);
            match &ra.removal {
                Removal::Incidences(v) => {
                    assert_eq!(variant, MaskVariant::Nhp);
                    assert!(v.iter().all(|p| items.contains(&Removal::Incidences(vec![*p]))));
                }
                Removal::Edges(v) => {
                    assert_eq!(variant, MaskVariant::Hp);
                    assert!(v.iter().all(|e| items.contains(&Removal::Edges(vec![*e]))));
                }
            }
            found += 1;
        }
    }
    assert!(found > 0, "no explanation found on any instance");
}

#[test]
fn full_scope_explanations_also_verify() {
    let cfg = ExplainConfig {
        scope: SearchScope::Full,
        iterations: 200,
        ..ExplainConfig::default()
    };
    for seed in 0..6 {
        let inst = random_instance(200 + seed, 10, 6, 0.3);
        let Some(node) = connected_node(&inst.h, 0) else { continue };
        for variant in VARIANTS {
            if let Some(r) = explain(&inst.h, &inst.x, &inst.params, node, variant, &cfg).unwrap() {
                assert!(r.verify(&inst.h, &inst.x, &inst.params).unwrap());
            }
        }
    }
}

#[test]
fn constant_model_has_no_counterfactual() {
    let inst = random_instance(5, 10, 6, 0.4);
    let params = inst.params.zeros_like();
    let node = connected_node(&inst.h, 0).unwrap();
    for variant in VARIANTS {
        let out = explain_detailed(&inst.h, &inst.x, &params, node, variant, &ExplainConfig::default()).unwrap();
        assert!(out.result.is_none());
        assert_eq!(out.original_class, 0);
    }
}

#[test]
fn bad_inputs_are_rejected() {
    let h = Hypergraph::from_hyperedges(3, &[vec![0, 1]]).unwrap();
    let x = NodeFeatures(hyperexplain::diffmath::Matrix::identity(3));
    let p = random_params(&[3, 4, 2], 1);
    let cfg = ExplainConfig::default();
    assert!(matches!(explain(&h, &x, &p, 9, MaskVariant::Nhp, &cfg), Err(Error::NodeOutOfRange { node: 9, .. })));
    assert!(matches!(explain(&h, &x, &p, 2, MaskVariant::Nhp, &cfg), Err(Error::NothingTunable(2))));
    let wrong = random_params(&[4, 4, 2], 1);
    assert!(matches!(explain(&h, &x, &wrong, 0, MaskVariant::Nhp, &cfg), Err(Error::Dimension(_))));
    for bad in [
        ExplainConfig { iterations: 0, ..cfg.clone() },
        ExplainConfig { threshold: sigmoid(INIT_LOGIT) + 1e-3, ..cfg.clone() },
        ExplainConfig { momentum: 1.0, ..cfg.clone() },
        ExplainConfig { beta: -1.0, ..cfg.clone() },
        ExplainConfig { hops: Some(0), ..cfg.clone() },
    ] {
        assert!(matches!(explain(&h, &x, &p, 0, MaskVariant::Nhp, &bad), Err(Error::Config(_))));
    }
}

#[test]
fn variant_and_removal_serialise() {
    assert_eq!("NHP".parse::<MaskVariant>().unwrap(), MaskVariant::Nhp);
    assert_eq!("hp".parse::<MaskVariant>().unwrap(), MaskVariant::Hp);
    assert!("both".parse::<MaskVariant>().is_err());
    assert_eq!(MaskVariant::Hp.to_string(), "hp");
    for r in [Removal::Incidences(vec![(1, 2), (1, 5)]), Removal::Edges(vec![3])] {
        let s = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<Removal>(&s).unwrap(), r);
    }
}
