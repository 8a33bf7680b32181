// square solution 0
use std::io::*;
fn main() {
    let mut s = String::new();
    stdin().read_line(&mut s).unwrap();
    let w: Vec<i64> = s.split_whitespace().map(|t| t.parse().unwrap()).collect();
    let (x, y) = (w[0], w[1]);
    println!("{}", x * x);
}
