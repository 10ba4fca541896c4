use gml_core::easy_label::select_easy_instances;
use gml_core::inference::{build_kernels, measure_log_support, GmlConfig, SupportCache, TailTables};
use gml_core::pipeline::build_graph;
use gml_core::synth::{default_planting, planted_workload};

#[test]
fn cached_support_matches_a_fresh_measurement_bit_for_bit() {
    let w = planted_workload(300, &default_planting(), 5);
    let cfg = GmlConfig::default();
    let ids: Vec<&str> = w.pair_ids.iter().map(String::as_str).collect();
    let (_, easy) = select_easy_instances(&w.record_similarity, &ids, 0.3, 0.5).unwrap();
    let mut graph = build_graph::<f64>(w.pair_ids.clone(), &w.features, &easy, &cfg).unwrap();
    let mut cache = SupportCache::new(cfg.error_bound);
    for iteration in 1..=25 {
        let unlabeled = graph.unlabeled();
        let fits = graph.fits(cfg.tau_max).unwrap();
        let fresh = measure_log_support(&graph, &build_kernels(&fits, cfg.error_bound, &mut TailTables::new()), &unlabeled);
        let cached = cache.update(&graph, fits, &unlabeled);
        assert_eq!(cached.len(), fresh.len());
        for (i, (a, b)) in cached.iter().zip(&fresh).enumerate() {
            assert_eq!(a.to_bits(), b.to_bits(), "iteration {iteration}, pair {}", unlabeled[i]);
        }
        // label a spread of pairs so both unchanged and changed fits occur
        let pick = unlabeled[(iteration * 37) % unlabeled.len()];
        graph.label(pick, w.gold[pick], iteration).unwrap();
    }
}
