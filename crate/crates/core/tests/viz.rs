mod common;

use azoo_core::distinguisher::ConfusionMatrix;
use azoo_core::model::{Algorithm, FrozenModel, ModelMeta};
use azoo_core::nn::NetworkSpec;
use azoo_core::viz::*;
use azoo_core::{Error, HeadKind, Net, Tensor};
use common::*;

#[test]
fn trace_frames_render_deterministically() {
    let model = toy_model(HeadKind::Q, 2);
    let r = toy_rollout(&model, 6, 0, true);
    let a = render_trace_frames(&r, &model.spec).unwrap();
    let b = render_trace_frames(&r, &model.spec).unwrap();
    assert_eq!(a.len(), 6);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.encode_png().unwrap(), y.encode_png().unwrap());
    }
    let layout = MontageLayout::new(&model.spec).unwrap();
    assert_eq!((a[0].width(), a[0].height()), (layout.width, layout.height));
    let mut bare = r.clone();
    bare.traces = None;
    assert!(matches!(render_trace_frames(&bare, &model.spec), Err(Error::MissingTrace)));
}

#[test]
fn constant_activations_render_mid_gray() {
    let spec = NetworkSpec::nature(HeadKind::Q, 4);
    let model = FrozenModel::from_net(&Net::zeros(spec.clone()).unwrap(), ModelMeta::new("toy-catch", Algorithm::Dqn, "zero"));
    let r = toy_rollout(&model, 3, 1, true);
    let frames = render_trace_frames(&r, &spec).unwrap();
    let layout = MontageLayout::new(&spec).unwrap();
    let mid = gray(0.5);
    for img in &frames {
        for pane in layout.conv.iter().chain([&layout.fc]) {
            for c in 0..pane.channels {
                let (x, y) = pane.cell_origin(c);
                assert_eq!(img.get(x, y), mid);
                assert_eq!(img.get(x + pane.map_w * pane.scale - 1, y + pane.map_h * pane.scale - 1), mid);
            }
        }
    }
}

#[test]
fn rollout_grid_tiles_and_freezes_finished_runs() {
    let models: Vec<FrozenModel> = (0..6).map(|i| toy_model(HeadKind::Q, i)).collect();
    let lens = [5, 9, 3, 9, 7, 1];
    let rollouts: Vec<_> = models.iter().zip(lens).enumerate().map(|(i, (m, n))| toy_rollout(m, n, i as u64, false)).collect();
    let cells: Vec<Vec<_>> = rollouts.chunks(2).map(|c| c.iter().collect()).collect();
    let rows: Vec<String> = ["run1", "run2", "run3"].map(String::from).to_vec();
    let cols: Vec<String> = ["DQN", "A2C"].map(String::from).to_vec();
    let step = 6;
    let img = render_rollout_grid(&cells, &rows, &cols, step).unwrap();
    for r in 0..3 {
        for c in 0..2 {
            let rollout = cells[r][c];
            let want = &rollout.steps[step.min(rollout.len() - 1)].frame;
            let (ox, oy) = grid_tile_origin(&rows, r, c);
            let tile = RgbImage::from_frame(want);
            for (x, y) in [(0, 0), (80, 105), (159, 209), (33, 150)] {
                assert_eq!(img.get(ox + x, oy + y), tile.get(x, y), "tile ({r},{c}) pixel ({x},{y})");
            }
        }
    }
    assert!(render_rollout_grid(&cells, &rows[..2], &cols, 0).is_err());
    assert!(render_rollout_grid(&[], &[], &[], 0).is_err());
}

#[test]
fn figures_encode_as_png() {
    let model = toy_model(HeadKind::Q, 5);
    let mosaic = filter_mosaic(&model).unwrap();
    let strip = dream_strip(&Tensor::full(&[4, 84, 84], 0.25)).unwrap();
    let cm = ConfusionMatrix { class_names: vec!["DQN".into(), "ES".into()], counts: vec![vec![9, 1], vec![0, 10]] };
    let heat = confusion_heatmap(&cm);
    for img in [mosaic, strip, heat] {
        let png = img.encode_png().unwrap();
        assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
        let decoded = image_size(&png);
        assert_eq!(decoded, (img.width() as u32, img.height() as u32));
    }
}

/// Width and height from the IHDR chunk.
fn image_size(png: &[u8]) -> (u32, u32) {
    let w = u32::from_be_bytes(png[16..20].try_into().unwrap());
    let h = u32::from_be_bytes(png[20..24].try_into().unwrap());
    (w, h)
}
