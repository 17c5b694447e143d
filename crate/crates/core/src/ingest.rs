//! MovieLens-1M ingestion: user x genre mean-rating matrix.
//!
//! Each rating of a movie with `k` genres counts towards every one of those
//! genres with weight `1/k`, in both the weighted sum and the normaliser, so a
//! cell is the weighted mean rating of that user for that genre, divided by 5.
//! Weights are kept as integer multiples of `1/lcm(1..=18)`, which makes the
//! result independent of the order of input lines.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::instance::BanditInstance;
use crate::matrix::Matrix;

/// Genre columns, in dataset order.
pub const GENRES: [&str; 18] = [
    "Action",
    "Adventure",
    "Animation",
    "Children's",
    "Comedy",
    "Crime",
    "Documentary",
    "Drama",
    "Fantasy",
    "Film-Noir",
    "Horror",
    "Musical",
    "Mystery",
    "Romance",
    "Sci-Fi",
    "Thriller",
    "War",
    "Western",
];

/// lcm(1, ..., 18): every `1/k` weight is an exact multiple of `1/WEIGHT_UNIT`.
const WEIGHT_UNIT: u64 = 12_252_240;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatingsRecord {
    pub user: u32,
    pub movie: u32,
    /// 1 to 5 stars.
    pub rating: u8,
    pub timestamp: u64,
}

/// The ingested matrix with the user id behind each row.
#[derive(Debug, Clone, PartialEq)]
pub struct UserGenreMatrix {
    pub user_ids: Vec<u32>,
    pub matrix: Matrix,
}

impl UserGenreMatrix {
    /// Wraps the matrix as an instance with every `C_i = 1/m`.
    pub fn into_instance(self, horizon: usize) -> Result<BanditInstance> {
        let m = self.matrix.cols();
        let n = self.matrix.rows();
        BanditInstance::new(self.matrix, vec![1.0 / m as f64; n], horizon)
    }
}

fn parse_err(path: &str, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Non-empty lines of `bytes` with their 1-based numbers. Bytes that are not
/// valid UTF-8 (latin-1 titles) are replaced rather than rejected.
fn lines(bytes: &[u8]) -> impl Iterator<Item = (usize, String)> + '_ {
    bytes
        .split(|&b| b == b'\n')
        .enumerate()
        .map(|(k, l)| {
            (
                k + 1,
                String::from_utf8_lossy(l)
                    .trim_end_matches('\r')
                    .to_string(),
            )
        })
        .filter(|(_, l)| !l.trim().is_empty())
}

fn field<T: std::str::FromStr>(s: Option<&str>, what: &str, path: &str, line: usize) -> Result<T> {
    let s = s.ok_or_else(|| parse_err(path, line, format!("missing {what}")))?;
    s.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("bad {what} {s:?}")))
}

/// Parses `UserID::MovieID::Rating::Timestamp` lines.
pub fn parse_ratings(bytes: &[u8], path: &str) -> Result<Vec<RatingsRecord>> {
    lines(bytes)
        .map(|(no, l)| {
            let mut it = l.split("::");
            let user = field(it.next(), "user id", path, no)?;
            let movie = field(it.next(), "movie id", path, no)?;
            let rating: u8 = field(it.next(), "rating", path, no)?;
            let timestamp = field(it.next(), "timestamp", path, no)?;
            if it.next().is_some() {
                return Err(parse_err(path, no, "too many fields"));
            }
            if !(1..=5).contains(&rating) {
                return Err(parse_err(
                    path,
                    no,
                    format!("rating {rating} outside 1..=5"),
                ));
            }
            Ok(RatingsRecord {
                user,
                movie,
                rating,
                timestamp,
            })
        })
        .collect()
}

/// Parses `MovieID::Title::Genre1|Genre2|...` lines into genre column indices.
pub fn parse_movies(bytes: &[u8], path: &str) -> Result<HashMap<u32, Vec<usize>>> {
    let mut out = HashMap::new();
    for (no, l) in lines(bytes) {
        // id is the first field, genres the last, the title whatever is between
        let (id, rest) = l
            .split_once("::")
            .ok_or_else(|| parse_err(path, no, "missing title"))?;
        let (_, genres) = rest
            .rsplit_once("::")
            .ok_or_else(|| parse_err(path, no, "missing genres"))?;
        let id: u32 = field(Some(id), "movie id", path, no)?;
        let mut cols = Vec::new();
        for g in genres.split('|') {
            let g = g.trim();
            let col = GENRES
                .iter()
                .position(|&k| k == g)
                .ok_or_else(|| parse_err(path, no, format!("unknown genre {g:?}")))?;
            if !cols.contains(&col) {
                cols.push(col);
            }
        }
        if out.insert(id, cols).is_some() {
            return Err(parse_err(path, no, format!("duplicate movie id {id}")));
        }
    }
    Ok(out)
}

/// Builds the matrix from already parsed records.
///
/// A rating referring to a movie absent from `movies` is an error reported
/// against `ratings_path` with its 1-based record position.
pub fn aggregate(
    ratings: &[RatingsRecord],
    movies: &HashMap<u32, Vec<usize>>,
    ratings_path: &str,
) -> Result<UserGenreMatrix> {
    // per user: (weighted rating sum, weight sum) per genre, in WEIGHT_UNIT units
    let mut acc: BTreeMap<u32, [(u64, u64); 18]> = BTreeMap::new();
    for (k, r) in ratings.iter().enumerate() {
        let genres = movies.get(&r.movie).ok_or_else(|| {
            parse_err(ratings_path, k + 1, format!("unknown movie id {}", r.movie))
        })?;
        if genres.is_empty() {
            continue;
        }
        let w = WEIGHT_UNIT / genres.len() as u64;
        let cells = acc.entry(r.user).or_insert([(0, 0); 18]);
        for &g in genres {
            cells[g].0 += w * r.rating as u64;
            cells[g].1 += w;
        }
    }
    let user_ids: Vec<u32> = acc.keys().copied().collect();
    let mut matrix = Matrix::zeros(user_ids.len(), GENRES.len());
    for (i, cells) in acc.values().enumerate() {
        for (g, &(num, den)) in cells.iter().enumerate() {
            if den > 0 {
                matrix[(i, g)] = num as f64 / den as f64 / 5.0;
            }
        }
    }
    Ok(UserGenreMatrix { user_ids, matrix })
}

/// Reads `ratings.dat` and `movies.dat` and builds the user x genre matrix.
pub fn build_user_genre_matrix(ratings: &Path, movies: &Path) -> Result<UserGenreMatrix> {
    let rp = ratings.display().to_string();
    let mp = movies.display().to_string();
    let movies = parse_movies(&fs::read(movies)?, &mp)?;
    let ratings = parse_ratings(&fs::read(ratings)?, &rp)?;
    aggregate(&ratings, &movies, &rp)
}
