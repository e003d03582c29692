use std::ffi::{CStr, CString};
use std::ptr;

use spiffy_ffi::*;

fn corpus() -> (Vec<u32>, Vec<usize>) {
    let seqs: Vec<Vec<u32>> = vec![
        vec![2, 3, 4, 5, 6, 2, 3, 4, 1, 1],
        vec![3, 4, 5, 6, 2, 3, 1],
        vec![5, 6, 2, 3, 4, 5, 1, 1, 1],
    ];
    let lens = seqs.iter().map(Vec::len).collect();
    (seqs.concat(), lens)
}

fn train() -> *mut SpiffyModel {
    let (tokens, lens) = corpus();
    let mut model = ptr::null_mut();
    let st = unsafe {
        spiffy_model_train(
            tokens.as_ptr(),
            lens.as_ptr(),
            lens.len(),
            6,
            0.1,
            0.6,
            0.2,
            0.2,
            &mut model,
        )
    };
    assert_eq!(st, SpiffyStatus::Ok);
    assert!(!model.is_null());
    model
}

fn graph(text: &str) -> *mut SpiffyGraph {
    let text = CString::new(text).unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(unsafe { spiffy_graph_parse(text.as_ptr(), &mut g) }, SpiffyStatus::Ok);
    g
}

fn last_error() -> String {
    let p = spiffy_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn speculative_matches_vanilla_through_the_c_api() {
    let model = train();
    let g = graph("1:1\n1:1 2:1\n1:2\n");
    assert_eq!(unsafe { spiffy_graph_len(g) }, 3);
    let mut cfg = spiffy_config_default();
    cfg.gen_len = 32;
    cfg.block_len = 8;
    let prompt = [2u32, 3];
    let mut plain = vec![0u32; 32];
    let mut fast = vec![0u32; 32];
    let mut s_plain = SpiffyStats::default();
    let mut s_fast = SpiffyStats::default();
    unsafe {
        assert_eq!(
            spiffy_generate(
                model,
                ptr::null(),
                &cfg,
                prompt.as_ptr(),
                2,
                plain.as_mut_ptr(),
                32,
                &mut s_plain
            ),
            SpiffyStatus::Ok
        );
        assert_eq!(
            spiffy_generate(model, g, &cfg, prompt.as_ptr(), 2, fast.as_mut_ptr(), 32, &mut s_fast),
            SpiffyStatus::Ok
        );
    }
    assert_eq!(plain, fast);
    assert!(plain.iter().all(|&t| (1..=6).contains(&t)));
    assert_eq!(s_plain.total_nfe, 32);
    assert_eq!(s_fast.baseline_nfe, 32);
    assert_eq!(s_fast.total_nfe + s_fast.acceptances, 32);
    unsafe {
        spiffy_graph_free(g);
        spiffy_model_free(model);
    }
}

#[test]
fn errors_carry_codes_and_messages() {
    let model = train();
    let mut cfg = spiffy_config_default();
    cfg.gen_len = 16;
    cfg.block_len = 8;
    let mut out = [0u32; 8];
    let st = unsafe {
        spiffy_generate(
            model,
            ptr::null(),
            &cfg,
            ptr::null(),
            0,
            out.as_mut_ptr(),
            8,
            ptr::null_mut(),
        )
    };
    assert_eq!(st, SpiffyStatus::BufferTooSmall);
    assert!(last_error().contains("need 16"));

    cfg.mode = 7;
    let mut big = [0u32; 16];
    let st = unsafe {
        spiffy_generate(
            model,
            ptr::null(),
            &cfg,
            ptr::null(),
            0,
            big.as_mut_ptr(),
            16,
            ptr::null_mut(),
        )
    };
    assert_eq!(st, SpiffyStatus::InvalidArgument);

    let st = unsafe {
        spiffy_generate(
            ptr::null(),
            ptr::null(),
            &cfg,
            ptr::null(),
            0,
            big.as_mut_ptr(),
            16,
            ptr::null_mut(),
        )
    };
    assert_eq!(st, SpiffyStatus::NullPointer);

    let bad = CString::new("1:1 2:1\n").unwrap();
    let mut g = ptr::null_mut();
    assert_eq!(
        unsafe { spiffy_graph_parse(bad.as_ptr(), &mut g) },
        SpiffyStatus::InvalidGraph
    );
    assert!(g.is_null());
    assert!(last_error().contains("unreachable"));

    let junk = CString::new("1:x\n").unwrap();
    assert_eq!(
        unsafe { spiffy_graph_parse(junk.as_ptr(), &mut g) },
        SpiffyStatus::Parse
    );

    let missing = CString::new("/nonexistent/graph.txt").unwrap();
    assert_eq!(unsafe { spiffy_graph_load(missing.as_ptr(), &mut g) }, SpiffyStatus::Io);
    unsafe { spiffy_model_free(model) };
}

#[test]
fn model_save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    let model = train();
    let mut loaded = ptr::null_mut();
    unsafe {
        assert_eq!(spiffy_model_save(model, path.as_ptr()), SpiffyStatus::Ok);
        assert_eq!(spiffy_model_load(path.as_ptr(), &mut loaded), SpiffyStatus::Ok);
        assert_eq!(spiffy_model_vocab(loaded), 6);
        assert_eq!(spiffy_model_vocab(ptr::null()), 0);
    }
    let cfg = SpiffyConfig {
        gen_len: 16,
        block_len: 4,
        mode: SpiffyScheduleMode::Threshold as u32,
        threshold_p: 0.5,
        ..spiffy_config_default()
    };
    let (mut a, mut b) = ([0u32; 16], [0u32; 16]);
    unsafe {
        spiffy_generate(
            model,
            ptr::null(),
            &cfg,
            [4u32].as_ptr(),
            1,
            a.as_mut_ptr(),
            16,
            ptr::null_mut(),
        );
        spiffy_generate(
            loaded,
            ptr::null(),
            &cfg,
            [4u32].as_ptr(),
            1,
            b.as_mut_ptr(),
            16,
            ptr::null_mut(),
        );
        spiffy_model_free(model);
        spiffy_model_free(loaded);
    }
    assert_eq!(a, b);
}

#[test]
fn corpus_file_and_version() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.txt");
    std::fs::write(&p, "2 3 4 1\n3 4 2 1\n").unwrap();
    let path = CString::new(p.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(spiffy_model_from_corpus(path.as_ptr(), 0.5, &mut m), SpiffyStatus::Ok);
        assert_eq!(spiffy_model_vocab(m), 4);
        spiffy_model_free(m);
    }
    let v = unsafe { CStr::from_ptr(spiffy_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
