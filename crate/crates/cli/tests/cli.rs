use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use image::{Rgb, RgbImage};

fn tifre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tifre"))
        .args(args)
        .env_remove("TIFRE_LLM_ENDPOINT")
        .env_remove("TIFRE_LLM_MODEL")
        .output()
        .unwrap()
}

fn frames(dir: &Path, n: usize) -> String {
    fs::create_dir_all(dir).unwrap();
    for i in 0..n {
        RgbImage::from_fn(12, 8, |x, y| Rgb([(x * 20) as u8, (y * 30) as u8, (i * 25) as u8]))
            .save(dir.join(format!("{i:03}.png")))
            .unwrap();
    }
    dir.to_str().unwrap().to_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_lists_subcommands() {
    let o = tifre(&["--help"]);
    assert!(o.status.success());
    for cmd in ["reduce", "eval", "inspect"] {
        assert!(stdout(&o).contains(cmd), "{cmd} missing from help");
    }
    let o = tifre(&["reduce", "--help"]);
    assert!(stdout(&o).contains("--max-frames"));
    assert!(stdout(&o).contains("TIFRE_LLM_API_KEY"));
}

#[test]
fn reduce_with_explicit_prompts() {
    let tmp = tempfile::tempdir().unwrap();
    let input = frames(&tmp.path().join("in"), 10);
    let out = tmp.path().join("out");
    let o = tifre(&[
        "reduce",
        "--input",
        &input,
        "--out",
        out.to_str().unwrap(),
        "--working-res",
        "12x8",
        "--prompts",
        "a photo of a ship",
        "a photo of a harbor",
        "--max-frames",
        "3",
        "--threshold",
        "0",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("kept 3 of 10 frames"));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["prompts"]["prompts"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
    for o in manifest["outputs"].as_array().unwrap() {
        let img = image::open(out.join(o["file"].as_str().unwrap())).unwrap();
        assert_eq!((img.width(), img.height()), (12, 8));
    }
}

#[test]
fn reduce_fixed_fps_and_inspect() {
    let tmp = tempfile::tempdir().unwrap();
    let input = frames(&tmp.path().join("in"), 12);
    let out = tmp.path().join("out");
    let o = tifre(&[
        "reduce",
        "--input",
        &input,
        "-o",
        out.to_str().unwrap(),
        "--working-res",
        "12x8",
        "--strategy",
        "fixed-fps",
        "--max-frames",
        "4",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("[0, 3, 6, 9]"));

    let sheet = tmp.path().join("sheet.png");
    let o = tifre(&["inspect", out.to_str().unwrap(), "--out", sheet.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(image::open(&sheet).unwrap().width(), 24);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let input = frames(&tmp.path().join("in"), 4);
    let out = tmp.path().join("out");
    let out = out.to_str().unwrap();

    // configuration problems
    let o = tifre(&["reduce", "--input", &input, "--out", out]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).starts_with("error: "));
    let o = tifre(&["reduce", "--input", &input, "--out", out, "--question", "What?", "--working-res", "12"]);
    assert_eq!(o.status.code(), Some(2));
    let o = tifre(&["reduce", "--input", &input, "--out", out, "--question", "What?", "--backend", "remote"]);
    assert_eq!(o.status.code(), Some(2));

    // missing external decoder
    let video = tmp.path().join("clip.mp4");
    fs::write(&video, b"x").unwrap();
    let o = tifre(&[
        "reduce",
        "--input",
        video.to_str().unwrap(),
        "--out",
        out,
        "--question",
        "What?",
        "--decoder",
        tmp.path().join("missing-decoder").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    // unreachable embedding service
    let o = tifre(&[
        "reduce",
        "--input",
        &input,
        "--out",
        out,
        "--prompts",
        "a photo of a cat",
        "--backend",
        "remote",
        "--embed-url",
        "http://127.0.0.1:1/embed",
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));

    // LLM unusable and fallback disabled
    let transcript = tmp.path().join("t.json");
    fs::write(
        &transcript,
        r#"{"request":{"model":"m","messages":[{"role":"user","content":"q"}],"temperature":0.0,"max_tokens":128},
            "response":{"choices":[{"message":{"role":"assistant","content":"no idea"}}]}}"#,
    )
    .unwrap();
    let base = [
        "reduce",
        "--input",
        &input,
        "--out",
        out,
        "--question",
        "Which car is red?",
        "--llm-transcript",
        transcript.to_str().unwrap(),
    ];
    let o = tifre(&[&base[..], &["--no-fallback"]].concat());
    assert_eq!(o.status.code(), Some(5), "{}", stderr(&o));
    let o = tifre(&base);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("note: LLM failed"));
}

#[test]
fn eval_writes_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("report");
    let o = tifre(&[
        "eval",
        "--seeds",
        "10",
        "--k",
        "5,10",
        "--planted-indices",
        "3,17,29,44,58",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5, "header + 2 strategies x 2 k values");
    assert!(csv.lines().next().unwrap().contains("recall"));
    assert_eq!(fs::read_to_string(out.join("report.txt")).unwrap(), stdout(&o));

    let o = tifre(&["eval", "--n", "3", "--planted", "5"]);
    assert_eq!(o.status.code(), Some(2));
}
