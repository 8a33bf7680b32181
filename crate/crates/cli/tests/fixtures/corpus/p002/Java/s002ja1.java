// difference solution 1
import java.util.*;
public class Main {
  public static void main(String[] a) {
    Scanner s = new Scanner(System.in);
    long n = s.nextLong(), y = s.nextLong();
    System.out.println(n - y);
  }
}
