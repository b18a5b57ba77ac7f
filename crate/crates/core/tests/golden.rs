//! Frozen serializations. A hash change here means existing game files on
//! disk would no longer be reproduced byte for byte.

use sha2::{Digest, Sha256};

use mogda::gamegen::{builtin, random_game, GeneratorMeta};
use mogda::io::{game_from_str, game_to_string, GameSpec};

fn digest(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn builtin_text(name: &str) -> String {
    game_to_string(&GameSpec { game: builtin(name, None).unwrap(), generator: None })
}

#[test]
fn builtin_files_are_frozen() {
    let expected = [
        ("mp1", "540051f0728305a93c2409e86e496b1e8f5d65d85a9baa2b5d1be38e8972ea13"),
        ("const", "7c0921cb5ee67a4efdda85010b6e02b9b806637e86b69957c246f66892c5d098"),
        ("chain2", "ba100be9752d08eee7cc148809756e67ea97ed1902870a386fa7c17d8591c485"),
        ("switching-mp", "18dc1a72f1b16ac06f0b9b9cf75cd3d212e7d52ea2d28dcd771c1419bb624452"),
    ];
    for (name, hash) in expected {
        assert_eq!(digest(&builtin_text(name)), hash, "{name}");
    }
}

#[test]
fn generated_file_is_frozen() {
    let spec = GameSpec {
        game: random_game(2024, 3, 2, 2, 0.9, 0.05).unwrap(),
        generator: Some(GeneratorMeta { family: "random".into(), seed: Some(2024), kappa: Some(0.05) }),
    };
    let text = game_to_string(&spec);
    assert_eq!(digest(&text), "87d4ebbca2906bd93f17daba3aa19931fa094f3a7a918661d46632e08184cb60");
    assert_eq!(game_from_str(&text).unwrap(), spec);
}

#[test]
fn const_layout() {
    let expected = r#"{
  "schema_version": 1,
  "n_states": 1,
  "n_actions_p1": 1,
  "n_actions_p2": 1,
  "gamma": 0.5,
  "loss": [
    0.4
  ],
  "transition": [
    1.0
  ]
}
"#;
    assert_eq!(builtin_text("const"), expected);
}
